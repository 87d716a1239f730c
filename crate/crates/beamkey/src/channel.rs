//! Geometric multipath MIMO channels and their beam-domain representation.
//!
//! A scenario describes a base station with `M` ULA antennas serving `K`
//! user terminals, each reached over `NP` specular paths. This module
//! synthesizes downlink channel realizations, transforms them to the beam
//! domain through unitary DFT sampling matrices, and estimates the
//! covariance structures consumed by the key-rate formulas: the per-side
//! covariances, their beam-domain counterparts, and the full beam
//! correlation of the vectorized beam-domain channel.
//!
//! Beam index `b` (0-based) points at the grid direction with
//! `sin(phi) = 2(b+1)/M - 1`; index `M/2 - 1` is broadside. Uplink and
//! downlink are reciprocal: the uplink channel is exactly the transpose of
//! the downlink matrix.

use std::f64::consts::{FRAC_PI_2, PI};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, cn_scalar, vec_stack, CMat, CVec, Cpx};
use crate::rng::{Purpose, Streams};

/// Relative tolerance for the PSD repair of sample covariances.
const PSD_CLIP_TOL: f64 = 1e-12;

// ---------------------------------------------------------------------------
// Scenario
// ---------------------------------------------------------------------------

/// Full system description: array sizes, path geometry and SNR.
///
/// Angles are radians strictly inside (-pi/2, pi/2); `gain_var[k][p]` is the
/// variance of the complex gain of path `p` of user `k`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Scenario {
    /// BS antenna count M.
    pub m: usize,
    /// Per-user antenna counts N_k.
    pub n: Vec<usize>,
    /// Paths per user.
    pub n_paths: usize,
    /// Antenna spacing over wavelength, d/lambda.
    pub spacing_ratio: f64,
    /// aoa[k][p]: angle of arrival at UT k of path p.
    pub aoa: Vec<Vec<f64>>,
    /// aod[k][p]: angle of departure at the BS.
    pub aod: Vec<Vec<f64>>,
    /// gain_var[k][p]: variance of the complex path gain.
    pub gain_var: Vec<Vec<f64>>,
    /// Signal-to-noise ratio in dB (unit total channel power per user).
    pub snr_db: f64,
    /// Master RNG seed.
    pub seed: u64,
}

impl Scenario {
    /// Number of user terminals.
    pub fn k(&self) -> usize {
        self.n.len()
    }

    /// Noise variance sigma^2 = 10^(-snr_db/10).
    pub fn sigma2(&self) -> f64 {
        10f64.powf(-self.snr_db / 10.0)
    }

    pub fn streams(&self) -> Streams {
        Streams::new(self.seed)
    }

    /// Check every structural invariant, naming the offending field.
    pub fn validate(&self) -> Result<()> {
        let fail = |field: &str, reason: String| {
            Err(Error::InvalidScenario {
                field: field.into(),
                reason,
            })
        };
        if self.m == 0 {
            return fail("m", "M >= 1 required".into());
        }
        if self.n.is_empty() {
            return fail("n", "at least one user required".into());
        }
        if self.n_paths == 0 {
            return fail("n_paths", "NP >= 1 required".into());
        }
        if !(self.spacing_ratio > 0.0) {
            return fail("spacing_ratio", "must be positive".into());
        }
        for (k, &nk) in self.n.iter().enumerate() {
            if nk == 0 {
                return fail("n", format!("user {k}: N[k] >= 1 required"));
            }
        }
        for (name, arr) in [("aoa", &self.aoa), ("aod", &self.aod)] {
            if arr.len() != self.k() {
                return fail(name, format!("expected {} users, got {}", self.k(), arr.len()));
            }
            for (k, row) in arr.iter().enumerate() {
                if row.len() != self.n_paths {
                    return fail(name, format!("user {k}: expected {} paths, got {}", self.n_paths, row.len()));
                }
                for (p, &a) in row.iter().enumerate() {
                    if !a.is_finite() || a.abs() >= FRAC_PI_2 {
                        return fail(name, format!("user {k} path {p}: |angle| < pi/2 required, got {a}"));
                    }
                }
            }
        }
        if self.gain_var.len() != self.k() {
            return fail("gain_var", format!("expected {} users, got {}", self.k(), self.gain_var.len()));
        }
        for (k, row) in self.gain_var.iter().enumerate() {
            if row.len() != self.n_paths {
                return fail("gain_var", format!("user {k}: expected {} paths, got {}", self.n_paths, row.len()));
            }
            if row.iter().any(|&g| !(g >= 0.0) || !g.is_finite()) {
                return fail("gain_var", format!("user {k}: variances must be finite and >= 0"));
            }
            let total: f64 = row.iter().sum();
            if !(total > 0.0) {
                return fail("gain_var", format!("user {k}: total path power must be positive"));
            }
        }
        Ok(())
    }

    /// Scenario with randomly drawn path angles.
    ///
    /// Angles are uniform over (-pi/2, pi/2); with `on_grid` they are snapped
    /// to distinct beam-grid directions of the respective array.
    pub fn random(
        m: usize,
        n: Vec<usize>,
        n_paths: usize,
        snr_db: f64,
        seed: u64,
        on_grid: bool,
        gains: GainProfile,
    ) -> Result<Scenario> {
        let streams = Streams::new(seed);
        let mut rng = streams.stream(Purpose::ScenarioAngles, 0);
        let k = n.len();
        let mut aoa = Vec::with_capacity(k);
        let mut aod = Vec::with_capacity(k);
        for &nk in &n {
            if on_grid {
                aod.push(draw_grid_angles(&mut rng, m, n_paths)?);
                aoa.push(draw_grid_angles(&mut rng, nk, n_paths)?);
            } else {
                aod.push((0..n_paths).map(|_| draw_open_angle(&mut rng)).collect());
                aoa.push((0..n_paths).map(|_| draw_open_angle(&mut rng)).collect());
            }
        }
        let gain_var = vec![gains.weights(n_paths); k];
        let s = Scenario {
            m,
            n,
            n_paths,
            spacing_ratio: 0.5,
            aoa,
            aod,
            gain_var,
            snr_db,
            seed,
        };
        s.validate()?;
        Ok(s)
    }
}

/// Per-path power profiles (normalized to unit total power).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GainProfile {
    /// gain_var = 1/NP for every path.
    Equal,
    /// Geometric decay g_p proportional to ratio^p.
    Geometric { ratio: f64 },
}

impl GainProfile {
    pub fn weights(&self, n_paths: usize) -> Vec<f64> {
        match *self {
            GainProfile::Equal => vec![1.0 / n_paths as f64; n_paths],
            GainProfile::Geometric { ratio } => {
                let raw: Vec<f64> = (0..n_paths).map(|p| ratio.powi(p as i32)).collect();
                let total: f64 = raw.iter().sum();
                raw.into_iter().map(|w| w / total).collect()
            }
        }
    }
}

fn draw_open_angle<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    loop {
        let a = (rng.random::<f64>() - 0.5) * PI;
        if a.abs() < FRAC_PI_2 {
            return a;
        }
    }
}

/// Distinct on-grid directions; index M (endfire, sin = 1) is excluded so the
/// angles stay strictly inside the open interval.
fn draw_grid_angles<R: Rng + ?Sized>(rng: &mut R, m: usize, count: usize) -> Result<Vec<f64>> {
    if m < 2 {
        return Err(Error::InvalidArgument(format!(
            "cannot draw on-grid angles for an array of {m} antenna(s)"
        )));
    }
    let avail = m - 1;
    let mut picked = Vec::with_capacity(count);
    if count >= avail {
        // with more paths than interior beams, allow repeats
        for _ in 0..count {
            picked.push(rng.random_range(0..avail));
        }
    } else {
        while picked.len() < count {
            let b = rng.random_range(0..avail);
            if !picked.contains(&b) {
                picked.push(b);
            }
        }
    }
    Ok(picked.into_iter().map(|b| grid_angle(b, m)).collect())
}

// ---------------------------------------------------------------------------
// Beam grid helpers
// ---------------------------------------------------------------------------

/// Sine of the grid direction of beam `b` (0-based) on an `m`-antenna array.
#[inline]
pub fn grid_sine(b: usize, m: usize) -> f64 {
    2.0 * (b + 1) as f64 / m as f64 - 1.0
}

/// Grid angle of beam `b` (0-based): arcsin(2(b+1)/m - 1).
#[inline]
pub fn grid_angle(b: usize, m: usize) -> f64 {
    grid_sine(b, m).asin()
}

/// Nearest beam index (0-based) for `angle`; exact ties snap to the lower
/// index.
pub fn snap_to_grid(angle: f64, m: usize) -> usize {
    let x = (angle.sin() + 1.0) * m as f64 / 2.0 - 1.0; // beam index on a continuous scale
    let lo = x.floor();
    let idx = if (x - lo) > 0.5 { lo + 1.0 } else { lo };
    (idx.max(0.0) as usize).min(m - 1)
}

/// Whether `angle` lies on the beam grid of an `m`-antenna array.
pub fn is_on_grid(angle: f64, m: usize, tol: f64) -> bool {
    let b = snap_to_grid(angle, m);
    (angle.sin() - grid_sine(b, m)).abs() <= tol
}

// ---------------------------------------------------------------------------
// Array responses and transforms
// ---------------------------------------------------------------------------

/// Unit-norm ULA steering vector: entry i is
/// `(1/sqrt(n)) * exp(-j 2 pi spacing_ratio i sin(angle))`.
pub fn steering_vector(angle: f64, n: usize, spacing_ratio: f64) -> Result<CVec> {
    if n == 0 {
        return Err(Error::InvalidArgument("steering vector needs n >= 1".into()));
    }
    if !angle.is_finite() || angle.abs() >= FRAC_PI_2 {
        return Err(Error::InvalidArgument(format!(
            "steering angle must satisfy |angle| < pi/2, got {angle}"
        )));
    }
    let scale = 1.0 / (n as f64).sqrt();
    let phase = -2.0 * PI * spacing_ratio * angle.sin();
    Ok(CVec::from_fn(n, |i, _| {
        linalg::cis(phase * i as f64) * Cpx::new(scale, 0.0)
    }))
}

/// Unitary DFT beam-sampling matrix; entry (r, c) (0-based) is
/// `(1/sqrt(n)) * exp(-j 2 pi r (c + 1 - n/2) / n)`.
///
/// Column `b` equals the steering vector of the grid direction of beam `b`
/// at half-wavelength spacing.
pub fn dft_beam_matrix(n: usize) -> Result<CMat> {
    if n == 0 {
        return Err(Error::InvalidArgument("DFT matrix needs n >= 1".into()));
    }
    let scale = 1.0 / (n as f64).sqrt();
    Ok(CMat::from_fn(n, n, |r, c| {
        let arg = -2.0 * PI * (r as f64) * ((c + 1) as f64 - n as f64 / 2.0) / n as f64;
        linalg::cis(arg) * Cpx::new(scale, 0.0)
    }))
}

/// Beam-domain transform A_ut^H H A_bs.
pub fn beam_transform(h: &CMat, a_ut: &CMat, a_bs: &CMat) -> Result<CMat> {
    if a_ut.nrows() != h.nrows() || a_bs.nrows() != h.ncols() {
        return Err(Error::DimensionMismatch {
            context: "beam_transform",
            expected: format!("A_ut {0}x{0}, A_bs {1}x{1}", h.nrows(), h.ncols()),
            got: format!(
                "A_ut {}x{}, A_bs {}x{}",
                a_ut.nrows(),
                a_ut.ncols(),
                a_bs.nrows(),
                a_bs.ncols()
            ),
        });
    }
    Ok(a_ut.adjoint() * h * a_bs)
}

// ---------------------------------------------------------------------------
// Channel synthesis
// ---------------------------------------------------------------------------

/// One narrow-band downlink realization; the uplink channel is `h[k]`
/// transposed.
#[derive(Debug, Clone)]
pub struct ChannelRealization {
    /// h[k]: N_k x M downlink channel of user k.
    pub h: Vec<CMat>,
    /// gains[k][p]: the complex path gains drawn for this realization.
    pub gains: Vec<Vec<Cpx>>,
}

/// Draw path gains and assemble H_k as the sum of rank-one path terms.
pub fn synthesize_channel(s: &Scenario, rng: &mut ChaCha8Rng) -> Result<ChannelRealization> {
    let mut h = Vec::with_capacity(s.k());
    let mut gains = Vec::with_capacity(s.k());
    for k in 0..s.k() {
        let mut gk = Vec::with_capacity(s.n_paths);
        let mut hk = CMat::zeros(s.n[k], s.m);
        for p in 0..s.n_paths {
            let alpha = cn_scalar(rng, s.gain_var[k][p]);
            let a_ut = steering_vector(s.aoa[k][p], s.n[k], s.spacing_ratio)?;
            let a_bs = steering_vector(s.aod[k][p], s.m, s.spacing_ratio)?;
            hk += (&a_ut * a_bs.adjoint()) * alpha;
            gk.push(alpha);
        }
        h.push(hk);
        gains.push(gk);
    }
    Ok(ChannelRealization { h, gains })
}

/// Realization for Monte-Carlo round `round`, on its own RNG stream.
pub fn synthesize_round(s: &Scenario, streams: &Streams, round: u64) -> Result<ChannelRealization> {
    let mut rng = streams.stream(Purpose::ChannelGains, round);
    synthesize_channel(s, &mut rng)
}

/// Asymptotic beam-domain channel of Proposition-style grid sampling: entry
/// (n, m) collects the gains of paths lying exactly on rx beam n and tx beam
/// m; off-grid paths contribute nothing.
pub fn asymptotic_beam_channel(s: &Scenario, k: usize, gains: &[Cpx]) -> CMat {
    let mut g = CMat::zeros(s.n[k], s.m);
    const TOL: f64 = 1e-12;
    for p in 0..s.n_paths {
        let (theta, phi) = (s.aoa[k][p], s.aod[k][p]);
        if is_on_grid(theta, s.n[k], TOL) && is_on_grid(phi, s.m, TOL) {
            let bn = snap_to_grid(theta, s.n[k]);
            let bm = snap_to_grid(phi, s.m);
            g[(bn, bm)] += gains[p];
        }
    }
    g
}

// ---------------------------------------------------------------------------
// Covariances
// ---------------------------------------------------------------------------

/// How covariances are obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CovMode {
    /// Sample averages over seeded channel realizations.
    MonteCarlo { trials: usize },
    /// Exact second-order statistics of the path model. For on-grid angles
    /// the beam correlation is diagonal with the path powers at the grid
    /// indices.
    Analytic,
}

/// Per-user covariance structures in the antenna and beam domains.
#[derive(Debug, Clone)]
pub struct CovarianceSet {
    /// R_BS[k] = E[H^H H], M x M.
    pub r_bs: Vec<CMat>,
    /// R_UT[k] = E[H H^H], N_k x N_k.
    pub r_ut: Vec<CMat>,
    /// Beam-domain R_BS: A_BS^H R_BS A_BS.
    pub rt_bs: Vec<CMat>,
    /// Beam-domain R_UT.
    pub rt_ut: Vec<CMat>,
    /// Lambda[k] = E[vec(H~) vec(H~)^H], (M N_k) x (M N_k).
    pub lambda: Vec<CMat>,
    /// Sample count behind the estimates (0 for analytic mode).
    pub trials: usize,
}

/// Estimate (or compute) the full covariance structure of a scenario.
pub fn estimate_covariances(s: &Scenario, mode: CovMode) -> Result<CovarianceSet> {
    s.validate()?;
    match mode {
        CovMode::Analytic => analytic_covariances(s),
        CovMode::MonteCarlo { trials } => {
            if trials == 0 {
                return Err(Error::InvalidArgument(
                    "covariance estimation needs trials >= 1".into(),
                ));
            }
            monte_carlo_covariances(s, trials)
        }
    }
}

fn analytic_covariances(s: &Scenario) -> Result<CovarianceSet> {
    let a_bs = dft_beam_matrix(s.m)?;
    let mut out = CovarianceSet {
        r_bs: Vec::new(),
        r_ut: Vec::new(),
        rt_bs: Vec::new(),
        rt_ut: Vec::new(),
        lambda: Vec::new(),
        trials: 0,
    };
    for k in 0..s.k() {
        let nk = s.n[k];
        let a_ut = dft_beam_matrix(nk)?;
        let mut r_bs = CMat::zeros(s.m, s.m);
        let mut r_ut = CMat::zeros(nk, nk);
        let mut lambda = CMat::zeros(s.m * nk, s.m * nk);
        for p in 0..s.n_paths {
            let g = Cpx::new(s.gain_var[k][p], 0.0);
            let v_bs = steering_vector(s.aod[k][p], s.m, s.spacing_ratio)?;
            let v_ut = steering_vector(s.aoa[k][p], nk, s.spacing_ratio)?;
            r_bs += (&v_bs * v_bs.adjoint()) * g;
            r_ut += (&v_ut * v_ut.adjoint()) * g;
            let path_beam = a_ut.adjoint() * (&v_ut * v_bs.adjoint()) * &a_bs;
            let v = vec_stack(&path_beam);
            lambda += (&v * v.adjoint()) * g;
        }
        out.rt_bs.push(a_bs.adjoint() * &r_bs * &a_bs);
        out.rt_ut.push(a_ut.adjoint() * &r_ut * &a_ut);
        out.r_bs.push(r_bs);
        out.r_ut.push(r_ut);
        out.lambda.push(lambda);
    }
    Ok(out)
}

fn monte_carlo_covariances(s: &Scenario, trials: usize) -> Result<CovarianceSet> {
    let streams = s.streams();
    let a_bs = dft_beam_matrix(s.m)?;
    let a_ut: Vec<CMat> = s.n.iter().map(|&nk| dft_beam_matrix(nk)).collect::<Result<_>>()?;

    struct Acc {
        r_bs: Vec<CMat>,
        r_ut: Vec<CMat>,
        lambda: Vec<CMat>,
    }
    let zero = || Acc {
        r_bs: (0..s.k()).map(|_| CMat::zeros(s.m, s.m)).collect(),
        r_ut: s.n.iter().map(|&nk| CMat::zeros(nk, nk)).collect(),
        lambda: s.n.iter().map(|&nk| CMat::zeros(s.m * nk, s.m * nk)).collect(),
    };
    const CHUNK: usize = 64;
    let acc = linalg::chunked_par_fold(
        trials,
        CHUNK,
        zero,
        |acc, t| {
            let real = synthesize_round(s, &streams, t as u64).expect("validated scenario");
            for k in 0..s.k() {
                let h = &real.h[k];
                acc.r_bs[k] += h.adjoint() * h;
                acc.r_ut[k] += h * h.adjoint();
                let hb = a_ut[k].adjoint() * h * &a_bs;
                let v = vec_stack(&hb);
                acc.lambda[k] += &v * v.adjoint();
            }
        },
        |mut a, b| {
            for k in 0..s.k() {
                a.r_bs[k] += &b.r_bs[k];
                a.r_ut[k] += &b.r_ut[k];
                a.lambda[k] += &b.lambda[k];
            }
            a
        },
    );

    let scale = Cpx::new(1.0 / trials as f64, 0.0);
    let finish = |m: CMat| -> Result<CMat> {
        let scaled = m * scale;
        // enforce exact Hermitian symmetry before the PSD repair
        let sym = (&scaled + scaled.adjoint()) * Cpx::new(0.5, 0.0);
        linalg::clip_psd(&sym, PSD_CLIP_TOL)
    };

    let mut out = CovarianceSet {
        r_bs: Vec::new(),
        r_ut: Vec::new(),
        rt_bs: Vec::new(),
        rt_ut: Vec::new(),
        lambda: Vec::new(),
        trials,
    };
    for (k, (rb, (ru, la))) in acc
        .r_bs
        .into_iter()
        .zip(acc.r_ut.into_iter().zip(acc.lambda.into_iter()))
        .enumerate()
    {
        let r_bs = finish(rb)?;
        let r_ut = finish(ru)?;
        out.rt_bs.push(a_bs.adjoint() * &r_bs * &a_bs);
        out.rt_ut.push(a_ut[k].adjoint() * &r_ut * &a_ut[k]);
        out.r_bs.push(r_bs);
        out.r_ut.push(r_ut);
        out.lambda.push(finish(la)?);
    }
    Ok(out)
}

impl CovarianceSet {
    /// Beam indices of user k whose beam-domain power exceeds
    /// `threshold * max`.
    pub fn active_beams(&self, k: usize, threshold: f64) -> Vec<usize> {
        active_indices(&self.rt_bs[k], threshold)
    }
}

fn active_indices(rt: &CMat, threshold: f64) -> Vec<usize> {
    let diag: Vec<f64> = rt.diagonal().iter().map(|z| z.re).collect();
    let max = diag.iter().cloned().fold(0.0_f64, f64::max);
    diag.iter()
        .enumerate()
        .filter(|(_, &d)| d > threshold * max)
        .map(|(i, _)| i)
        .collect()
}

/// Beams active for both users: indices where each diagonal exceeds
/// `threshold` times its own maximum.
pub fn beam_overlap(rt_bs_k: &CMat, rt_bs_j: &CMat, threshold: f64) -> Result<Vec<usize>> {
    if rt_bs_k.nrows() != rt_bs_j.nrows() {
        return Err(Error::DimensionMismatch {
            context: "beam_overlap",
            expected: format!("{}", rt_bs_k.nrows()),
            got: format!("{}", rt_bs_j.nrows()),
        });
    }
    let a = active_indices(rt_bs_k, threshold);
    let b = active_indices(rt_bs_j, threshold);
    Ok(a.into_iter().filter(|i| b.contains(i)).collect())
}

/// Composite index of beam pair (rx beam n, tx beam m) in vec(H~): column
/// stacking of the N x M beam matrix.
#[inline]
pub fn beam_pair_index(rx: usize, tx: usize, n_rx: usize) -> usize {
    tx * n_rx + rx
}
