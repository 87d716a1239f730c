//! Secret key rates: closed forms, an empirical oracle, and leakage.
//!
//! The closed forms evaluate the mutual information between the two ends'
//! LS channel estimates from second-order statistics alone: the full beam
//! correlation of each user, the beam-domain precoders/combiners, and the
//! pilot cross-covariances. Noise of variance sigma^2 is folded in by
//! scaling the beam correlations by 1/sigma^2 (equivalent to rescaling the
//! observations), which keeps the noise blocks at identity.
//!
//! Three routes are kept deliberately distinct so they can check each
//! other:
//! - [`key_rate_general`]: the full multi-user expression with arbitrary
//!   pilot cross-covariances, evaluated through the joint observation
//!   covariance in log-determinant form;
//! - [`key_rate_orthogonal`]: the single-user simplification, reduced
//!   algebraically to `2 logdet(I+W) - logdet(I+2W)` with
//!   `W = U^H Lambda U / sigma^2`;
//! - [`empirical_mi`]: a Gaussian mutual-information estimate from Monte
//!   Carlo probe samples, the ground-truth oracle for both.
//!
//! All determinants are computed in the log domain via Cholesky
//! factorization.

use crate::error::{Error, Result};
use crate::linalg::{self, kron, psd_sqrt, CMat, CVec, Cpx};
use crate::probing::Pilots;

/// Cap reported for divergent empirical mutual information, in bits.
pub const MI_CAP_BITS: f64 = 60.0;

/// Eigenvalue floor (relative to trace/dim) below which a sample covariance
/// is ridged before factorization.
const COV_EIG_FLOOR: f64 = 1e-12;
/// Relative ridge applied to ill-conditioned sample covariances.
const COV_RIDGE: f64 = 1e-10;

/// Unit of reported rates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LogBase {
    /// Base-2 logarithms: bits per probing round.
    #[default]
    Bits,
    /// Natural logarithms: nats per probing round.
    Nats,
}

impl LogBase {
    #[inline]
    fn from_ln(&self, x: f64) -> f64 {
        match self {
            LogBase::Bits => x / std::f64::consts::LN_2,
            LogBase::Nats => x,
        }
    }
}

// ---------------------------------------------------------------------------
// Inputs
// ---------------------------------------------------------------------------

/// Statistics and design matrices feeding the closed-form rates.
#[derive(Debug, Clone)]
pub struct RateInputs {
    /// Full beam correlation per user, (M N_k) x (M N_k).
    pub lambda: Vec<CMat>,
    /// Beam-domain precoders, M x M_e with orthonormal columns.
    pub pt: Vec<CMat>,
    /// Beam-domain combiners, N_k x N_e with orthonormal columns.
    pub ct: Vec<CMat>,
    /// s_dl[k'][k]: downlink pilot cross-covariance S_{k'} S_k^H.
    pub s_dl: Vec<Vec<CMat>>,
    /// s_ul[k'][k]: uplink pilot cross-covariance (S_{k'} S_k^H)^T.
    pub s_ul: Vec<Vec<CMat>>,
    /// Noise variance; must be positive for the closed forms.
    pub sigma2: f64,
    pub log_base: LogBase,
}

impl RateInputs {
    /// Inputs with orthogonal pilots between users (zero cross terms).
    pub fn orthogonal(lambda: Vec<CMat>, pt: Vec<CMat>, ct: Vec<CMat>, sigma2: f64) -> Result<Self> {
        let k = lambda.len();
        let m_e = pt.first().map(|p| p.ncols()).unwrap_or(0);
        let n_e = ct.first().map(|c| c.ncols()).unwrap_or(0);
        let s_dl = cross_grid(k, m_e, true);
        let s_ul = cross_grid(k, n_e, true);
        Self::new(lambda, pt, ct, s_dl, s_ul, sigma2)
    }

    /// Inputs with fully reused pilots (identity cross terms).
    pub fn reused(lambda: Vec<CMat>, pt: Vec<CMat>, ct: Vec<CMat>, sigma2: f64) -> Result<Self> {
        let k = lambda.len();
        let m_e = pt.first().map(|p| p.ncols()).unwrap_or(0);
        let n_e = ct.first().map(|c| c.ncols()).unwrap_or(0);
        let s_dl = cross_grid(k, m_e, false);
        let s_ul = cross_grid(k, n_e, false);
        Self::new(lambda, pt, ct, s_dl, s_ul, sigma2)
    }

    /// Inputs with cross-covariances taken from concrete pilot matrices.
    pub fn with_pilots(
        lambda: Vec<CMat>,
        pt: Vec<CMat>,
        ct: Vec<CMat>,
        pilots: &Pilots,
        sigma2: f64,
    ) -> Result<Self> {
        let k = lambda.len();
        let s_dl = (0..k)
            .map(|kp| (0..k).map(|kk| pilots.cross_dl(kp, kk)).collect())
            .collect();
        let s_ul = (0..k)
            .map(|kp| (0..k).map(|kk| pilots.cross_ul(kp, kk)).collect())
            .collect();
        Self::new(lambda, pt, ct, s_dl, s_ul, sigma2)
    }

    pub fn new(
        lambda: Vec<CMat>,
        pt: Vec<CMat>,
        ct: Vec<CMat>,
        s_dl: Vec<Vec<CMat>>,
        s_ul: Vec<Vec<CMat>>,
        sigma2: f64,
    ) -> Result<Self> {
        let inputs = RateInputs {
            lambda,
            pt,
            ct,
            s_dl,
            s_ul,
            sigma2,
            log_base: LogBase::default(),
        };
        inputs.validate()?;
        Ok(inputs)
    }

    pub fn with_log_base(mut self, base: LogBase) -> Self {
        self.log_base = base;
        self
    }

    pub fn k(&self) -> usize {
        self.lambda.len()
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.k();
        if self.pt.len() != k || self.ct.len() != k || self.s_dl.len() != k || self.s_ul.len() != k {
            return Err(Error::DimensionMismatch {
                context: "RateInputs",
                expected: format!("{k} users in every field"),
                got: format!(
                    "pt:{} ct:{} s_dl:{} s_ul:{}",
                    self.pt.len(),
                    self.ct.len(),
                    self.s_dl.len(),
                    self.s_ul.len()
                ),
            });
        }
        if !(self.sigma2 > 0.0) {
            return Err(Error::InvalidArgument(
                "closed-form rates need sigma2 > 0".into(),
            ));
        }
        for (name, mats) in [("pt", &self.pt), ("ct", &self.ct)] {
            for (u, m) in mats.iter().enumerate() {
                let gram = m.adjoint() * m;
                let res = &gram - CMat::identity(gram.nrows(), gram.ncols());
                if linalg::max_abs(&res) > 1e-10 {
                    return Err(Error::InvalidArgument(format!(
                        "{name}[{u}] does not have orthonormal columns (residual {:.2e})",
                        linalg::max_abs(&res)
                    )));
                }
            }
        }
        for (u, lam) in self.lambda.iter().enumerate() {
            if linalg::hermitian_residual(lam) > 1e-9 {
                return Err(Error::InvalidArgument(format!(
                    "lambda[{u}] is not Hermitian"
                )));
            }
            let expect = self.pt[u].nrows() * self.ct[u].nrows();
            if lam.nrows() != expect {
                return Err(Error::DimensionMismatch {
                    context: "RateInputs lambda",
                    expected: format!("{expect}x{expect}"),
                    got: format!("{}x{}", lam.nrows(), lam.ncols()),
                });
            }
        }
        Ok(())
    }
}

fn cross_grid(k: usize, dim: usize, orthogonal: bool) -> Vec<Vec<CMat>> {
    (0..k)
        .map(|kp| {
            (0..k)
                .map(|kk| {
                    if kp == kk || !orthogonal {
                        CMat::identity(dim, dim)
                    } else {
                        CMat::zeros(dim, dim)
                    }
                })
                .collect()
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Closed forms
// ---------------------------------------------------------------------------

/// Multi-user secret key rate of user `k` with arbitrary pilot structure.
///
/// Valid when the channels of different users are independent. Evaluated
/// through the joint covariance of the aligned observation vectors:
/// I = logdet(R_DL) + logdet(R_UL) - logdet(R_joint).
pub fn key_rate_general(inputs: &RateInputs, k: usize) -> Result<f64> {
    general_rate_with_cross(
        inputs,
        k,
        |kp, kk| inputs.s_dl[kp][kk].clone(),
        |kp, kk| inputs.s_ul[kp][kk].clone(),
    )
}

/// Key rate with fully reused pilots: all cross-covariances are identity.
pub fn key_rate_reused(inputs: &RateInputs, k: usize) -> Result<f64> {
    let m_e = inputs.pt[k].ncols();
    let n_e = inputs.ct[k].ncols();
    general_rate_with_cross(
        inputs,
        k,
        |_, _| CMat::identity(m_e, m_e),
        |_, _| CMat::identity(n_e, n_e),
    )
}

fn general_rate_with_cross(
    inputs: &RateInputs,
    k: usize,
    cross_dl: impl Fn(usize, usize) -> CMat,
    cross_ul: impl Fn(usize, usize) -> CMat,
) -> Result<f64> {
    inputs.validate()?;
    let n_users = inputs.k();
    if k >= n_users {
        return Err(Error::InvalidArgument(format!("user index {k} out of range")));
    }
    let inv_sigma = Cpx::new(1.0 / inputs.sigma2.sqrt(), 0.0);
    // sqrt(Lambda / sigma^2) = sqrt(Lambda) / sigma
    let lam_sqrt: Vec<CMat> = inputs.lambda.iter().map(|l| psd_sqrt(l) * inv_sigma).collect();

    let d = inputs.pt[k].ncols() * inputs.ct[k].ncols();

    // downlink mixing: X = sum_{k'} (Pt_{k'} S^DL_{k'k})^T (x) Ct_k^H
    let mut x = CMat::zeros(d, inputs.lambda[k].nrows());
    for kp in 0..n_users {
        let left = (&inputs.pt[kp] * cross_dl(kp, k)).transpose();
        x += kron(&left, &inputs.ct[k].adjoint());
    }
    let v_k = &lam_sqrt[k] * x.adjoint();

    // uplink mixing per interferer: Y_{k'} = Pt_k^T (x) S^UL_{k'k} Ct_{k'}^H
    let pt_k_t = inputs.pt[k].transpose();
    let mut r_ul = kron(
        &(inputs.pt[k].transpose() * inputs.pt[k].conjugate()),
        &CMat::identity(inputs.ct[k].ncols(), inputs.ct[k].ncols()),
    );
    let mut v_kk = CMat::zeros(inputs.lambda[k].nrows(), d);
    for kp in 0..n_users {
        let y = kron(&pt_k_t, &(cross_ul(kp, k) * inputs.ct[kp].adjoint()));
        let v = &lam_sqrt[kp] * y.adjoint();
        r_ul += v.adjoint() * &v;
        if kp == k {
            v_kk = v;
        }
    }

    let r_dl = v_k.adjoint() * &v_k
        + kron(
            &CMat::identity(inputs.pt[k].ncols(), inputs.pt[k].ncols()),
            &(inputs.ct[k].adjoint() * &inputs.ct[k]),
        );
    let r_x = v_k.adjoint() * &v_kk;

    let mut joint = CMat::zeros(2 * d, 2 * d);
    joint.view_mut((0, 0), (d, d)).copy_from(&r_dl);
    joint.view_mut((0, d), (d, d)).copy_from(&r_x);
    joint.view_mut((d, 0), (d, d)).copy_from(&r_x.adjoint());
    joint.view_mut((d, d), (d, d)).copy_from(&r_ul);

    let ln_rate =
        linalg::ln_det_hpd(&r_dl)? + linalg::ln_det_hpd(&r_ul)? - linalg::ln_det_hpd(&joint)?;
    Ok(inputs.log_base.from_ln(ln_rate.max(0.0)))
}

/// Single-user/orthogonal-pilot key rate of user `k`.
///
/// With U = Pt_k^* (x) Ct_k and W = U^H (Lambda_k / sigma^2) U the rate
/// reduces to 2 logdet(I + W) - logdet(I + 2W).
pub fn key_rate_orthogonal(inputs: &RateInputs, k: usize) -> Result<f64> {
    inputs.validate()?;
    if k >= inputs.k() {
        return Err(Error::InvalidArgument(format!("user index {k} out of range")));
    }
    let u = kron(&inputs.pt[k].conjugate(), &inputs.ct[k]);
    let w = u.adjoint() * (&inputs.lambda[k] / Cpx::new(inputs.sigma2, 0.0)) * &u;
    Ok(inputs.log_base.from_ln(rate_from_w_ln(&w)?))
}

/// 2 logdet(I + W) - logdet(I + 2W) for Hermitian PSD W, in nats.
pub(crate) fn rate_from_w_ln(w: &CMat) -> Result<f64> {
    let d = w.nrows();
    let eye = CMat::identity(d, d);
    let a = linalg::ln_det_hpd(&(&eye + w))?;
    let b = linalg::ln_det_hpd(&(&eye + w * Cpx::new(2.0, 0.0)))?;
    Ok((2.0 * a - b).max(0.0))
}

/// Sum key rate divided by the pilot overhead in symbols.
pub fn unit_key_rate(r_sum: f64, pilot_symbols: usize) -> Result<f64> {
    if pilot_symbols == 0 {
        return Err(Error::InvalidArgument("pilot overhead must be positive".into()));
    }
    Ok(r_sum / pilot_symbols as f64)
}

// ---------------------------------------------------------------------------
// Empirical Gaussian mutual information
// ---------------------------------------------------------------------------

/// An empirical mutual-information estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MiEstimate {
    /// Estimated mutual information in bits (capped at [`MI_CAP_BITS`]).
    pub bits: f64,
    /// Whether the estimate hit the divergence cap.
    pub degenerate: bool,
    /// Whether any sample covariance needed a ridge.
    pub ridged: bool,
}

fn sample_cov(parts: &[&[CVec]]) -> CMat {
    let t = parts[0].len();
    let d: usize = parts.iter().map(|p| p[0].len()).sum();
    let mut r = CMat::zeros(d, d);
    let mut z = CVec::zeros(d);
    for i in 0..t {
        let mut off = 0;
        for p in parts {
            z.rows_mut(off, p[i].len()).copy_from(&p[i]);
            off += p[i].len();
        }
        r.gerc(Cpx::new(1.0, 0.0), &z, &z, Cpx::new(1.0, 0.0));
    }
    r / Cpx::new(t as f64, 0.0)
}

fn ln_det_cov(r: &CMat) -> (f64, bool) {
    let d = r.nrows();
    let tr: f64 = r.diagonal().iter().map(|z| z.re).sum();
    let scale = (tr / d as f64).max(f64::MIN_POSITIVE);
    let (vals, _) = linalg::hermitian_eigen(r);
    let needs_ridge = vals[0] < COV_EIG_FLOOR * scale;
    if needs_ridge {
        let mut m = r.clone();
        for i in 0..d {
            m[(i, i)] += Cpx::new(COV_RIDGE * scale, 0.0);
        }
        match linalg::ln_det_hpd(&m) {
            Ok(v) => (v, true),
            // eigenvalues with the same floor as a last resort
            Err(_) => (
                vals.iter().map(|&l| l.max(COV_RIDGE * scale).ln()).sum(),
                true,
            ),
        }
    } else {
        match linalg::ln_det_hpd(r) {
            Ok(v) => (v, false),
            Err(_) => (
                vals.iter().map(|&l| l.max(COV_RIDGE * scale).ln()).sum(),
                true,
            ),
        }
    }
}

fn check_sample_count(dim: usize, t: usize) -> Result<()> {
    if t < 10 * dim {
        return Err(Error::InvalidArgument(format!(
            "need at least {} samples for dimension {dim}, got {t}",
            10 * dim
        )));
    }
    Ok(())
}

/// Plug-in Gaussian mutual information between two zero-mean complex sample
/// sets, in bits: log2 det(R_A) det(R_B) / det(R_AB).
pub fn empirical_mi(za: &[CVec], zb: &[CVec]) -> Result<MiEstimate> {
    if za.len() != zb.len() || za.is_empty() {
        return Err(Error::LengthMismatch {
            context: "empirical_mi",
            a: za.len(),
            b: zb.len(),
        });
    }
    check_sample_count(za[0].len() + zb[0].len(), za.len())?;
    let (la, ra) = ln_det_cov(&sample_cov(&[za]));
    let (lb, rb) = ln_det_cov(&sample_cov(&[zb]));
    let (lab, rab) = ln_det_cov(&sample_cov(&[za, zb]));
    let bits = (la + lb - lab) / std::f64::consts::LN_2;
    // a rank-deficient joint with full-rank marginals means one side is a
    // deterministic function of the other: the true MI diverges
    let divergent = (rab && !ra && !rb) || bits >= MI_CAP_BITS;
    if divergent {
        Ok(MiEstimate {
            bits: MI_CAP_BITS,
            degenerate: true,
            ridged: true,
        })
    } else {
        Ok(MiEstimate {
            bits,
            degenerate: false,
            ridged: ra || rb || rab,
        })
    }
}

/// Conditional mutual information I(zDL_k ; zUL_k | zDL_i) from samples,
/// in bits. The minimization over curious users i != k is the caller's.
pub fn conditional_key_rate_empirical(
    zdl_k: &[CVec],
    zul_k: &[CVec],
    zdl_i: &[CVec],
) -> Result<MiEstimate> {
    let t = zdl_k.len();
    if zul_k.len() != t || zdl_i.len() != t || t == 0 {
        return Err(Error::LengthMismatch {
            context: "conditional_key_rate_empirical",
            a: t,
            b: zul_k.len().min(zdl_i.len()),
        });
    }
    check_sample_count(zdl_k[0].len() + zul_k[0].len() + zdl_i[0].len(), t)?;
    let (l_ac, r1) = ln_det_cov(&sample_cov(&[zdl_k, zdl_i]));
    let (l_bc, r2) = ln_det_cov(&sample_cov(&[zul_k, zdl_i]));
    let (l_abc, r3) = ln_det_cov(&sample_cov(&[zdl_k, zul_k, zdl_i]));
    let (l_c, r4) = ln_det_cov(&sample_cov(&[zdl_i]));
    let bits = (l_ac + l_bc - l_abc - l_c) / std::f64::consts::LN_2;
    if bits >= MI_CAP_BITS {
        Ok(MiEstimate {
            bits: MI_CAP_BITS,
            degenerate: true,
            ridged: true,
        })
    } else {
        Ok(MiEstimate {
            bits,
            degenerate: false,
            ridged: r1 || r2 || r3 || r4,
        })
    }
}

/// Minimum over curious users of the conditional MI, falling back to the
/// unconditional MI when there is no other user.
pub fn min_conditional_rate(zdl: &[Vec<CVec>], zul_k: &[CVec], k: usize) -> Result<MiEstimate> {
    if zdl.len() <= 1 {
        return empirical_mi(&zdl[k], zul_k);
    }
    let mut best: Option<MiEstimate> = None;
    for (i, zdl_i) in zdl.iter().enumerate() {
        if i == k {
            continue;
        }
        let est = conditional_key_rate_empirical(&zdl[k], zul_k, zdl_i)?;
        best = Some(match best {
            None => est,
            Some(b) if est.bits < b.bits => est,
            Some(b) => b,
        });
    }
    Ok(best.expect("at least one curious user"))
}

// ---------------------------------------------------------------------------
// Information leakage on a shared beam
// ---------------------------------------------------------------------------

/// Leakage figures for one overlapping beam shared by two unit-power users.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LeakageRatio {
    /// Information leakage ratio gamma = (R_h - R_rho) / R_h in [0, 1].
    pub gamma: f64,
    /// Conditional key rate at the given correlation, bits.
    pub r_rho: f64,
    /// Independent-channel rate (rho = 0), bits.
    pub r_h: f64,
    /// Fully-correlated rate (rho = +-1), bits.
    pub r_l: f64,
}

/// Closed-form information leakage ratio for cross-channel correlation
/// `rho` and noise variance `sigma2` on a single shared beam.
pub fn leakage_ratio(rho: f64, sigma2: f64) -> Result<LeakageRatio> {
    if !(sigma2 > 0.0) {
        return Err(Error::InvalidArgument("leakage ratio needs sigma2 > 0".into()));
    }
    if !(rho.abs() <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "correlation must lie in [-1, 1], got {rho}"
        )));
    }
    let s = sigma2;
    let rho2 = rho * rho;
    let r_rho_ln = (((1.0 + s).powi(2) - rho2).powi(2)
        / ((1.0 + s) * (s.powi(3) + 3.0 * s.powi(2) - 2.0 * s * rho2 + 2.0 * s)))
        .ln();
    let r_h_ln = ((1.0 + s).powi(2) / (s * (2.0 + s))).ln();
    let r_l_ln = ((2.0 + s).powi(2) / (3.0 + 4.0 * s + s * s)).ln();
    Ok(LeakageRatio {
        gamma: 1.0 - r_rho_ln / r_h_ln,
        r_rho: r_rho_ln / std::f64::consts::LN_2,
        r_h: r_h_ln / std::f64::consts::LN_2,
        r_l: r_l_ln / std::f64::consts::LN_2,
    })
}
