//! Two-phase TDD channel probing with least-squares estimation.
//!
//! One probing round runs a downlink phase (the BS transmits precoded
//! pilots, each UT combines and LS-estimates its effective channel) and an
//! uplink phase (UTs transmit conjugate-combined pilots simultaneously, the
//! BS combines per user). Pilots are rows of a unitary DFT matrix, giving
//! exact per-user orthonormality; across users they are either stacked
//! orthogonal blocks or fully reused. The intuitive full-dimension probing
//! scheme without precoding is kept as an overhead/correlation baseline.

use rand_chacha::ChaCha8Rng;

use crate::channel::Scenario;
use crate::error::{Error, Result};
use crate::linalg::{self, cn_matrix, vec_stack, CMat, CVec, Cpx};

// ---------------------------------------------------------------------------
// Pilot configuration
// ---------------------------------------------------------------------------

/// How pilot sequences relate across users.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PilotMode {
    /// Users occupy disjoint orthogonal pilot blocks.
    OrthogonalBetweenUsers,
    /// All users transmit the identical pilot sequence.
    ReusedBetweenUsers,
    /// Full-dimension probing with identity precoders (the baseline).
    BaselineFull,
}

/// Pilot lengths and effective dimensions for one probing round.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PilotConfig {
    pub mode: PilotMode,
    /// Downlink pilot length in symbols.
    pub t_d: usize,
    /// Uplink pilot length in symbols.
    pub t_u: usize,
    /// Effective BS dimension M_e.
    pub m_e: usize,
    /// Effective UT dimension N_e.
    pub n_e: usize,
    /// Downlink/uplink switching time in symbols (overhead accounting only).
    pub t_switch: usize,
}

impl PilotConfig {
    /// Reused pilots at the minimum lengths T_D = M_e, T_U = N_e.
    pub fn reused(m_e: usize, n_e: usize) -> Self {
        PilotConfig {
            mode: PilotMode::ReusedBetweenUsers,
            t_d: m_e,
            t_u: n_e,
            m_e,
            n_e,
            t_switch: 0,
        }
    }

    /// Orthogonal pilots with stacked blocks: T_D = K M_e, T_U = K N_e.
    pub fn orthogonal(m_e: usize, n_e: usize, k: usize) -> Self {
        PilotConfig {
            mode: PilotMode::OrthogonalBetweenUsers,
            t_d: k * m_e,
            t_u: k * n_e,
            m_e,
            n_e,
            t_switch: 0,
        }
    }

    pub fn validate(&self, k: usize) -> Result<()> {
        if self.m_e == 0 || self.n_e == 0 {
            return Err(Error::InvalidArgument("M_e and N_e must be >= 1".into()));
        }
        let (need_d, need_u) = match self.mode {
            PilotMode::OrthogonalBetweenUsers => (k * self.m_e, k * self.n_e),
            _ => (self.m_e, self.n_e),
        };
        if self.t_d < need_d || self.t_u < need_u {
            return Err(Error::InvalidArgument(format!(
                "pilot lengths infeasible: need T_D >= {need_d}, T_U >= {need_u}, got ({}, {})",
                self.t_d, self.t_u
            )));
        }
        Ok(())
    }

    /// Pilot symbols consumed by one probing round, T_D + T_U + T_switch.
    pub fn overhead_symbols(&self) -> usize {
        self.t_d + self.t_u + self.t_switch
    }
}

/// Pilot overhead of the full-dimension baseline: M + sum_k N_k symbols.
pub fn baseline_overhead_symbols(s: &Scenario) -> usize {
    s.m + s.n.iter().sum::<usize>()
}

/// Dimensionality reduction factor eta = (M N_k) / (M_e N_e) for user k.
pub fn reduction_factor(s: &Scenario, k: usize, cfg: &PilotConfig) -> f64 {
    (s.m * s.n[k]) as f64 / (cfg.m_e * cfg.n_e) as f64
}

// ---------------------------------------------------------------------------
// Pilot construction
// ---------------------------------------------------------------------------

/// Per-user pilot matrices for both phases.
#[derive(Debug, Clone)]
pub struct Pilots {
    /// s_dl[k]: M_e x T_D downlink pilot of user k.
    pub s_dl: Vec<CMat>,
    /// s_ul[k]: N_e x T_U uplink pilot of user k.
    pub s_ul: Vec<CMat>,
}

impl Pilots {
    /// Downlink pilot cross-covariance S_{k'} S_k^H.
    pub fn cross_dl(&self, k_prime: usize, k: usize) -> CMat {
        &self.s_dl[k_prime] * self.s_dl[k].adjoint()
    }

    /// Uplink pilot cross-covariance (S_{k'} S_k^H)^T.
    pub fn cross_ul(&self, k_prime: usize, k: usize) -> CMat {
        (&self.s_ul[k_prime] * self.s_ul[k].adjoint()).transpose()
    }
}

/// Rows `rows` of the unitary DFT matrix of size `t`.
fn dft_rows(t: usize, rows: std::ops::Range<usize>) -> CMat {
    let scale = 1.0 / (t as f64).sqrt();
    CMat::from_fn(rows.len(), t, |r, c| {
        let rr = rows.start + r;
        linalg::cis(-2.0 * std::f64::consts::PI * (rr * c) as f64 / t as f64) * Cpx::new(scale, 0.0)
    })
}

/// Build per-user pilots: orthonormal DFT rows, disjoint blocks in
/// orthogonal mode, the same block for everyone in reused mode.
pub fn make_pilots(cfg: &PilotConfig, k: usize) -> Result<Pilots> {
    cfg.validate(k)?;
    let mut s_dl = Vec::with_capacity(k);
    let mut s_ul = Vec::with_capacity(k);
    for u in 0..k {
        let (dl_range, ul_range) = match cfg.mode {
            PilotMode::OrthogonalBetweenUsers => {
                (u * cfg.m_e..(u + 1) * cfg.m_e, u * cfg.n_e..(u + 1) * cfg.n_e)
            }
            _ => (0..cfg.m_e, 0..cfg.n_e),
        };
        s_dl.push(dft_rows(cfg.t_d, dl_range));
        s_ul.push(dft_rows(cfg.t_u, ul_range));
    }
    Ok(Pilots { s_dl, s_ul })
}

// ---------------------------------------------------------------------------
// Probing rounds
// ---------------------------------------------------------------------------

fn check_probe_dims(
    h: &[CMat],
    p: &[CMat],
    c: &[CMat],
    pilots: &Pilots,
    cfg: &PilotConfig,
) -> Result<()> {
    let k = h.len();
    if p.len() != k || c.len() != k || pilots.s_dl.len() != k || pilots.s_ul.len() != k {
        return Err(Error::DimensionMismatch {
            context: "probe",
            expected: format!("{k} users"),
            got: format!("P:{} C:{} pilots:{}", p.len(), c.len(), pilots.s_dl.len()),
        });
    }
    for u in 0..k {
        let (n_u, m) = (h[u].nrows(), h[u].ncols());
        if p[u].nrows() != m || p[u].ncols() != cfg.m_e || c[u].nrows() != n_u || c[u].ncols() != cfg.n_e {
            return Err(Error::DimensionMismatch {
                context: "probe",
                expected: format!("P {}x{}, C {}x{}", m, cfg.m_e, n_u, cfg.n_e),
                got: format!(
                    "P {}x{}, C {}x{}",
                    p[u].nrows(),
                    p[u].ncols(),
                    c[u].nrows(),
                    c[u].ncols()
                ),
            });
        }
    }
    Ok(())
}

/// Downlink phase: the BS transmits the superposition of all users'
/// precoded pilots; user k combines with C_k^H and LS-estimates
/// Z_k = Y_k S_k^H (N_e x M_e). With sigma2 = 0 and orthogonal pilots this
/// is exactly C_k^H H_k P_k.
pub fn downlink_probe(
    h: &[CMat],
    p: &[CMat],
    c: &[CMat],
    pilots: &Pilots,
    cfg: &PilotConfig,
    sigma2: f64,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<CMat>> {
    check_probe_dims(h, p, c, pilots, cfg)?;
    if sigma2 < 0.0 {
        return Err(Error::InvalidArgument("noise variance must be >= 0".into()));
    }
    let k = h.len();
    // transmitted block sum_k P_k S_k (M x T_D)
    let mut tx = CMat::zeros(h[0].ncols(), cfg.t_d);
    for u in 0..k {
        tx += &p[u] * &pilots.s_dl[u];
    }
    let mut z = Vec::with_capacity(k);
    for u in 0..k {
        let mut y = c[u].adjoint() * &h[u] * &tx;
        if sigma2 > 0.0 {
            let noise = cn_matrix(rng, h[u].nrows(), cfg.t_d, sigma2);
            y += c[u].adjoint() * noise;
        }
        z.push(y * pilots.s_dl[u].adjoint());
    }
    Ok(z)
}

/// Uplink phase: all UTs transmit C_k^* S_k^UL simultaneously; the BS
/// applies P_k^T per user and LS-estimates Z_k = Y S_k^H (M_e x N_e). With
/// sigma2 = 0 and orthogonal pilots this is exactly P_k^T H_k^T C_k^*.
pub fn uplink_probe(
    h: &[CMat],
    p: &[CMat],
    c: &[CMat],
    pilots: &Pilots,
    cfg: &PilotConfig,
    sigma2: f64,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<CMat>> {
    check_probe_dims(h, p, c, pilots, cfg)?;
    if sigma2 < 0.0 {
        return Err(Error::InvalidArgument("noise variance must be >= 0".into()));
    }
    let k = h.len();
    let m = h[0].ncols();
    // received block sum_k H_k^T C_k^* S_k + N (M x T_U); one shared noise
    let mut rx = CMat::zeros(m, cfg.t_u);
    for u in 0..k {
        rx += h[u].transpose() * c[u].conjugate() * &pilots.s_ul[u];
    }
    if sigma2 > 0.0 {
        rx += cn_matrix(rng, m, cfg.t_u, sigma2);
    }
    let mut z = Vec::with_capacity(k);
    for u in 0..k {
        z.push(p[u].transpose() * &rx * pilots.s_ul[u].adjoint());
    }
    Ok(z)
}

/// Vectorize one round's estimates into aligned observation vectors:
/// z_DL = vec(Z_DL), z_UL = vec(Z_UL^T). The transpose on the uplink lines
/// the reciprocal components up element-wise.
pub fn vectorize_observation(z_dl: &CMat, z_ul: &CMat) -> Result<(CVec, CVec)> {
    if z_dl.nrows() != z_ul.ncols() || z_dl.ncols() != z_ul.nrows() {
        return Err(Error::DimensionMismatch {
            context: "vectorize_observation",
            expected: format!("Z_UL of shape {}x{}", z_dl.ncols(), z_dl.nrows()),
            got: format!("{}x{}", z_ul.nrows(), z_ul.ncols()),
        });
    }
    Ok((vec_stack(z_dl), vec_stack(&z_ul.transpose())))
}

/// Full-dimension baseline: identity precoders and orthogonal pilots of
/// length M (downlink) and sum_k N_k (uplink). Returns per-user
/// (vec estimate of H_k, aligned uplink estimate).
pub fn baseline_probe(
    s: &Scenario,
    h: &[CMat],
    sigma2: f64,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<(CVec, CVec)>> {
    let k = s.k();
    let n_total: usize = s.n.iter().sum();
    let s_dl = dft_rows(s.m, 0..s.m); // M x M unitary
    let mut offsets = Vec::with_capacity(k);
    let mut acc = 0usize;
    for &nk in &s.n {
        offsets.push(acc);
        acc += nk;
    }
    // downlink: Z_k = H_k + N_k S^H
    let mut out = Vec::with_capacity(k);
    let mut z_dl = Vec::with_capacity(k);
    for u in 0..k {
        let mut y = &h[u] * &s_dl;
        if sigma2 > 0.0 {
            y += cn_matrix(rng, s.n[u], s.m, sigma2);
        }
        z_dl.push(y * s_dl.adjoint());
    }
    // uplink: all users simultaneously on stacked orthogonal blocks
    let mut rx = CMat::zeros(s.m, n_total);
    let s_ul: Vec<CMat> = (0..k)
        .map(|u| dft_rows(n_total, offsets[u]..offsets[u] + s.n[u]))
        .collect();
    for u in 0..k {
        rx += h[u].transpose() * &s_ul[u];
    }
    if sigma2 > 0.0 {
        rx += cn_matrix(rng, s.m, n_total, sigma2);
    }
    for u in 0..k {
        let z_ul = &rx * s_ul[u].adjoint(); // M x N_k
        out.push((vec_stack(&z_dl[u]), vec_stack(&z_ul.transpose())));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{dft_beam_matrix, grid_angle, synthesize_round, Scenario};
    use crate::linalg::{max_abs, selection_matrix};
    use crate::rng::{Purpose, Streams};

    fn two_user_scenario(on_grid_beams: Option<[Vec<usize>; 2]>) -> Scenario {
        let m = 16;
        let n = 4;
        let (aod, n_paths) = match &on_grid_beams {
            Some(beams) => (
                [
                    beams[0].iter().map(|&b| grid_angle(b, m)).collect::<Vec<_>>(),
                    beams[1].iter().map(|&b| grid_angle(b, m)).collect::<Vec<_>>(),
                ],
                beams[0].len(),
            ),
            None => ([vec![0.3, -0.5], vec![0.9, 0.1]], 2),
        };
        Scenario {
            m,
            n: vec![n, n],
            n_paths,
            spacing_ratio: 0.5,
            aoa: vec![
                (0..n_paths).map(|p| grid_angle(p % (n - 1), n)).collect(),
                (0..n_paths).map(|p| grid_angle(p % (n - 1), n)).collect(),
            ],
            aod: aod.to_vec(),
            gain_var: vec![vec![1.0 / n_paths as f64; n_paths]; 2],
            snr_db: 10.0,
            seed: 99,
        }
    }

    fn designed(s: &Scenario, tx_beams: &[Vec<usize>], rx_beams: &[Vec<usize>]) -> (Vec<CMat>, Vec<CMat>) {
        let a_bs = dft_beam_matrix(s.m).unwrap();
        let p: Vec<CMat> = tx_beams
            .iter()
            .map(|b| &a_bs * selection_matrix(s.m, b))
            .collect();
        let c: Vec<CMat> = rx_beams
            .iter()
            .enumerate()
            .map(|(k, b)| dft_beam_matrix(s.n[k]).unwrap() * selection_matrix(s.n[k], b))
            .collect();
        (p, c)
    }

    #[test]
    fn pilots_orthonormal_and_modes() {
        let cfg = PilotConfig::reused(3, 2);
        let pi = make_pilots(&cfg, 3).unwrap();
        for u in 0..3 {
            let res = &pi.s_dl[u] * pi.s_dl[u].adjoint() - CMat::identity(3, 3);
            assert!(max_abs(&res) <= 1e-12);
            assert_eq!(pi.s_dl[u], pi.s_dl[0]);
            assert_eq!(pi.s_ul[u], pi.s_ul[0]);
        }
        let cfg = PilotConfig::orthogonal(2, 2, 2);
        assert_eq!(cfg.t_d, 4);
        let pi = make_pilots(&cfg, 2).unwrap();
        assert!(max_abs(&pi.cross_dl(0, 1)) <= 1e-12);
        assert!(max_abs(&pi.cross_ul(1, 0)) <= 1e-12);
        for u in 0..2 {
            let res = &pi.s_ul[u] * pi.s_ul[u].adjoint() - CMat::identity(2, 2);
            assert!(max_abs(&res) <= 1e-12);
        }
    }

    #[test]
    fn pilot_config_rejects_short_lengths() {
        let mut cfg = PilotConfig::orthogonal(2, 2, 3);
        cfg.t_d = 4; // needs 6
        assert!(cfg.validate(3).is_err());
        assert!(PilotConfig::reused(0, 2).validate(1).is_err());
    }

    #[test]
    fn noiseless_orthogonal_recovers_effective_channel() {
        let s = two_user_scenario(None);
        let real = synthesize_round(&s, &s.streams(), 0).unwrap();
        let cfg = PilotConfig::orthogonal(3, 2, 2);
        let pilots = make_pilots(&cfg, 2).unwrap();
        let (p, c) = designed(&s, &[vec![0, 1, 2], vec![5, 6, 7]], &[vec![0, 1], vec![1, 2]]);
        let mut rng = s.streams().stream(Purpose::NoiseDownlink, 0);
        let z_dl = downlink_probe(&real.h, &p, &c, &pilots, &cfg, 0.0, &mut rng).unwrap();
        let z_ul = uplink_probe(&real.h, &p, &c, &pilots, &cfg, 0.0, &mut rng).unwrap();
        for k in 0..2 {
            let eff = c[k].adjoint() * &real.h[k] * &p[k];
            assert!(max_abs(&(&z_dl[k] - &eff)) < 1e-10);
            assert!(max_abs(&(z_ul[k].transpose() - &eff)) < 1e-10);
            // effective-channel reciprocity as an identity
            let ul = p[k].transpose() * real.h[k].transpose() * c[k].conjugate();
            assert!(max_abs(&(ul.transpose() - eff)) < 1e-12);
            let (a, b) = vectorize_observation(&z_dl[k], &z_ul[k]).unwrap();
            assert!((a - b).norm() < 1e-10);
        }
    }

    #[test]
    fn reused_pilots_neutralized_beams_cancel_interference() {
        // disjoint on-grid tx beams: cross terms vanish even with reuse
        let s = two_user_scenario(Some([vec![1, 4], vec![8, 11]]));
        let real = synthesize_round(&s, &s.streams(), 0).unwrap();
        let cfg = PilotConfig::reused(2, 2);
        let pilots = make_pilots(&cfg, 2).unwrap();
        let (p, c) = designed(&s, &[vec![1, 4], vec![8, 11]], &[vec![0, 1], vec![0, 1]]);
        let mut rng = s.streams().stream(Purpose::NoiseDownlink, 0);
        let z_dl = downlink_probe(&real.h, &p, &c, &pilots, &cfg, 0.0, &mut rng).unwrap();
        let z_ul = uplink_probe(&real.h, &p, &c, &pilots, &cfg, 0.0, &mut rng).unwrap();
        for k in 0..2 {
            let eff = c[k].adjoint() * &real.h[k] * &p[k];
            assert!(max_abs(&(&z_dl[k] - &eff)) <= 1e-9);
            assert!(max_abs(&(z_ul[k].transpose() - &eff)) <= 1e-9);
        }
    }

    #[test]
    fn reused_pilots_overlapping_beams_interfere() {
        let s = two_user_scenario(Some([vec![1, 4], vec![4, 11]]));
        let real = synthesize_round(&s, &s.streams(), 0).unwrap();
        let cfg = PilotConfig::reused(2, 2);
        let pilots = make_pilots(&cfg, 2).unwrap();
        // both users claim the contested beam 4
        let (p, c) = designed(&s, &[vec![1, 4], vec![4, 11]], &[vec![0, 1], vec![0, 1]]);
        let mut rng = s.streams().stream(Purpose::NoiseUplink, 0);
        let z_ul = uplink_probe(&real.h, &p, &c, &pilots, &cfg, 0.0, &mut rng).unwrap();
        let eff0 = p[0].transpose() * real.h[0].transpose() * c[0].conjugate();
        let interference = (&z_ul[0] - &eff0).norm();
        assert!(interference > 1e-3, "expected cross-user energy, got {interference}");
    }

    #[test]
    fn single_user_noise_power_accounting() {
        // E || Z - P^T H^T C^* ||_F^2 = M_e N_e sigma2
        let mut s = two_user_scenario(None);
        s.n = vec![4];
        s.aoa.truncate(1);
        s.aod.truncate(1);
        s.gain_var.truncate(1);
        let real = synthesize_round(&s, &s.streams(), 0).unwrap();
        let cfg = PilotConfig::reused(3, 2);
        let pilots = make_pilots(&cfg, 1).unwrap();
        let (p, c) = designed(&s, &[vec![0, 5, 9]], &[vec![0, 2]]);
        let sigma2 = 0.37;
        let eff = p[0].transpose() * real.h[0].transpose() * c[0].conjugate();
        let streams = Streams::new(5);
        let trials = 1000;
        let mut sum = 0.0;
        for t in 0..trials {
            let mut rng = streams.stream(Purpose::NoiseUplink, t);
            let z = uplink_probe(&real.h, &p, &c, &pilots, &cfg, sigma2, &mut rng).unwrap();
            sum += (&z[0] - &eff).norm().powi(2);
        }
        let mean = sum / trials as f64;
        let expect = (cfg.m_e * cfg.n_e) as f64 * sigma2;
        assert!((mean - expect).abs() / expect < 0.10, "mean {mean} vs {expect}");
    }

    #[test]
    fn post_ls_noise_is_isotropic() {
        // zero channel isolates the noise path: cov(vec noise) ~ sigma2 I
        let s = two_user_scenario(None);
        let h = vec![CMat::zeros(4, 16); 2];
        let cfg = PilotConfig::orthogonal(2, 2, 2);
        let pilots = make_pilots(&cfg, 2).unwrap();
        let (p, c) = designed(&s, &[vec![0, 1], vec![2, 3]], &[vec![0, 1], vec![0, 1]]);
        let sigma2 = 1.0;
        let streams = Streams::new(6);
        let d = cfg.m_e * cfg.n_e;
        let mut cov = CMat::zeros(d, d);
        let trials = 4000;
        for t in 0..trials {
            let mut rng = streams.stream(Purpose::NoiseDownlink, t);
            let z = downlink_probe(&h, &p, &c, &pilots, &cfg, sigma2, &mut rng).unwrap();
            let v = vec_stack(&z[0]);
            cov += &v * v.adjoint();
        }
        cov /= Cpx::new(trials as f64, 0.0);
        for r in 0..d {
            for cc in 0..d {
                let want = if r == cc { sigma2 } else { 0.0 };
                assert!(
                    (cov[(r, cc)] - Cpx::new(want, 0.0)).norm() < 0.1,
                    "cov({r},{cc}) = {}",
                    cov[(r, cc)]
                );
            }
        }
    }

    #[test]
    fn vectorize_ordering_and_dims() {
        let z_dl = CMat::from_row_slice(
            2,
            3,
            &[
                Cpx::new(1.0, 0.0),
                Cpx::new(2.0, 0.0),
                Cpx::new(3.0, 0.0),
                Cpx::new(4.0, 0.0),
                Cpx::new(5.0, 0.0),
                Cpx::new(6.0, 0.0),
            ],
        );
        let z_ul = z_dl.transpose();
        let (a, b) = vectorize_observation(&z_dl, &z_ul).unwrap();
        assert_eq!(a.len(), 6);
        let re: Vec<f64> = a.iter().map(|z| z.re).collect();
        assert_eq!(re, vec![1.0, 4.0, 2.0, 5.0, 3.0, 6.0]);
        assert_eq!(a, b);
        assert!(vectorize_observation(&z_dl, &z_dl).is_err());
    }

    #[test]
    fn correlation_decays_with_noise() {
        let s = two_user_scenario(None);
        let cfg = PilotConfig::orthogonal(3, 2, 2);
        let pilots = make_pilots(&cfg, 2).unwrap();
        let (p, c) = designed(&s, &[vec![0, 1, 2], vec![5, 6, 7]], &[vec![0, 1], vec![1, 2]]);
        let streams = Streams::new(8);
        let mut last = f64::INFINITY;
        for (i, sigma2) in [0.01, 0.1, 1.0, 10.0].into_iter().enumerate() {
            let trials = 800;
            let mut mags = Vec::with_capacity(trials * 6);
            for t in 0..trials {
                let real = synthesize_round(&s, &streams, t as u64).unwrap();
                let mut rng_d = streams.stream(Purpose::NoiseDownlink, (i * trials + t) as u64);
                let mut rng_u = streams.stream(Purpose::NoiseUplink, (i * trials + t) as u64);
                let z_dl = downlink_probe(&real.h, &p, &c, &pilots, &cfg, sigma2, &mut rng_d).unwrap();
                let z_ul = uplink_probe(&real.h, &p, &c, &pilots, &cfg, sigma2, &mut rng_u).unwrap();
                let (va, vb) = vectorize_observation(&z_dl[0], &z_ul[0]).unwrap();
                for j in 0..va.len() {
                    mags.push((va[j].norm(), vb[j].norm()));
                }
            }
            let n = mags.len() as f64;
            let (mut ma, mut mb) = (0.0, 0.0);
            for &(x, y) in &mags {
                ma += x;
                mb += y;
            }
            ma /= n;
            mb /= n;
            let (mut num, mut da, mut db) = (0.0, 0.0, 0.0);
            for &(x, y) in &mags {
                num += (x - ma) * (y - mb);
                da += (x - ma).powi(2);
                db += (y - mb).powi(2);
            }
            let corr = num / (da.sqrt() * db.sqrt());
            assert!(corr < last + 0.02, "correlation should not increase with noise");
            last = corr;
        }
        assert!(last < 0.5, "at sigma2=10 the correlation should be weak, got {last}");
    }

    #[test]
    fn baseline_recovers_full_channel() {
        let s = two_user_scenario(None);
        let real = synthesize_round(&s, &s.streams(), 0).unwrap();
        let mut rng = s.streams().stream(Purpose::NoiseDownlink, 0);
        let obs = baseline_probe(&s, &real.h, 0.0, &mut rng).unwrap();
        for k in 0..2 {
            let want = vec_stack(&real.h[k]);
            assert!((obs[k].0.clone() - &want).norm() < 1e-10);
            assert!((obs[k].1.clone() - &want).norm() < 1e-10);
            assert_eq!(obs[k].0.len(), s.m * s.n[k]);
        }
        assert_eq!(baseline_overhead_symbols(&s), 16 + 8);
        let cfg = PilotConfig::reused(3, 2);
        assert_eq!(cfg.overhead_symbols(), 5);
        assert_eq!(reduction_factor(&s, 0, &cfg), (16.0 * 4.0) / 6.0);
    }
}
