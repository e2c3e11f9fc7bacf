//! Ground-truth downlink pipeline: reduced singular bases, MRT/ZF precoding
//! under per-antenna power constraints, MMSE and MMSE-IRC detection, per-layer
//! SINR and spectral efficiency.

use std::fmt;
use std::ops::Range;
use std::str::FromStr;

use num_complex::Complex64;

use crate::channel::{ChannelObject, RANK_TOLERANCE};
use crate::error::{Error, Result};
use crate::linalg::{hermitian_condition, hpd_solve, svd_rows, CMatrix};

/// Largest condition number accepted for the ZF Gram matrix `Ṽ Ṽᴴ`.
pub const MAX_ZF_CONDITION: f64 = 1e12;

/// Stacked top-`L_k` right-singular rows of every user, grouped by user.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedBasis {
    /// `L × T`.
    pub v_tilde: CMatrix,
    /// Singular value matched to each row of `v_tilde`.
    pub s_tilde: Vec<f64>,
    /// `L_k` per user, in user order.
    pub layers: Vec<usize>,
}

impl ReducedBasis {
    pub fn num_users(&self) -> usize {
        self.layers.len()
    }

    pub fn total_layers(&self) -> usize {
        self.v_tilde.nrows()
    }

    /// Row range of user `k`.
    pub fn user_rows(&self, k: usize) -> Range<usize> {
        layer_range(&self.layers, k)
    }
}

pub(crate) fn layer_range(layers: &[usize], k: usize) -> Range<usize> {
    let start: usize = layers[..k].iter().sum();
    start..start + layers[k]
}

pub fn build_reduced_basis(obj: &ChannelObject) -> Result<ReducedBasis> {
    obj.check_shape()?;
    let l = obj.layers_per_user;
    let t = obj.tx_antennas();
    let mut v_tilde = CMatrix::zeros(obj.total_layers(), t);
    let mut s_tilde = Vec::with_capacity(obj.total_layers());
    for (k, h) in obj.users.iter().enumerate() {
        let d = svd_rows(h)?;
        if !(d.s[0] > 0.0 && d.s[l - 1] > RANK_TOLERANCE * d.s[0]) {
            return Err(Error::RankDeficient {
                user: k,
                required: l,
                singular_values: d.s,
            });
        }
        for i in 0..l {
            for (j, z) in d.v_row(i).iter().enumerate() {
                v_tilde[(k * l + i, j)] = *z;
            }
            s_tilde.push(d.s[i]);
        }
    }
    Ok(ReducedBasis {
        v_tilde,
        s_tilde,
        layers: obj.layers(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PrecoderKind {
    Mrt,
    Zf,
}

impl fmt::Display for PrecoderKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PrecoderKind::Mrt => "mrt",
            PrecoderKind::Zf => "zf",
        })
    }
}

impl FromStr for PrecoderKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "mrt" => Ok(PrecoderKind::Mrt),
            "zf" => Ok(PrecoderKind::Zf),
            other => Err(Error::Config(format!("unknown precoder {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DetectorKind {
    Mmse,
    MmseIrc,
}

impl fmt::Display for DetectorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DetectorKind::Mmse => "mmse",
            DetectorKind::MmseIrc => "irc",
        })
    }
}

impl FromStr for DetectorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "mmse" => Ok(DetectorKind::Mmse),
            "irc" | "mmse_irc" | "mmse-irc" => Ok(DetectorKind::MmseIrc),
            other => Err(Error::Config(format!("unknown detector {other:?}"))),
        }
    }
}

/// `W = μ · raw · P`, `T × L`.
#[derive(Debug, Clone, PartialEq)]
pub struct PrecodingMatrix {
    pub w: CMatrix,
    pub mu: f64,
    /// Diagonal of the column normalizer `P`.
    pub p: Vec<f64>,
    pub method: PrecoderKind,
}

impl PrecodingMatrix {
    /// `max_i ‖w^i‖²` over antenna rows.
    pub fn max_row_power(&self) -> f64 {
        max_row_power(&self.w)
    }

    /// Columns of user `k`.
    pub fn user_columns(&self, layers: &[usize], k: usize) -> CMatrix {
        let r = layer_range(layers, k);
        self.w.columns(r.start, r.len()).into_owned()
    }
}

fn max_row_power(w: &CMatrix) -> f64 {
    (0..w.nrows())
        .map(|i| w.row(i).iter().map(|z| z.norm_sqr()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Unit-normalizes columns, then scales by the largest `μ` meeting
/// `‖w^i‖² ≤ 1/T` on every antenna row.
fn normalize(mut raw: CMatrix, method: PrecoderKind) -> Result<PrecodingMatrix> {
    let t = raw.nrows();
    let mut p = Vec::with_capacity(raw.ncols());
    for j in 0..raw.ncols() {
        let n = raw.column(j).norm();
        if !(n > 0.0 && n.is_finite()) {
            return Err(Error::Degenerate(format!("precoder column {j} has norm {n}")));
        }
        raw.column_mut(j).scale_mut(1.0 / n);
        p.push(1.0 / n);
    }
    let peak = max_row_power(&raw);
    let mu = 1.0 / (t as f64 * peak).sqrt();
    raw.scale_mut(mu);
    Ok(PrecodingMatrix { w: raw, mu, p, method })
}

pub fn precode_mrt(basis: &ReducedBasis, tx_antennas: usize) -> Result<PrecodingMatrix> {
    check_antennas(basis, tx_antennas)?;
    normalize(basis.v_tilde.adjoint(), PrecoderKind::Mrt)
}

pub fn precode_zf(basis: &ReducedBasis, tx_antennas: usize) -> Result<PrecodingMatrix> {
    check_antennas(basis, tx_antennas)?;
    let vh = basis.v_tilde.adjoint();
    let gram = &basis.v_tilde * &vh;
    let cond = hermitian_condition(&gram);
    if !(cond < MAX_ZF_CONDITION) {
        return Err(Error::Conditioning(cond));
    }
    // Ṽᴴ (Ṽ Ṽᴴ)⁻¹ = ((Ṽ Ṽᴴ)⁻¹ Ṽ)ᴴ since the Gram matrix is Hermitian.
    let raw = hpd_solve(gram, &basis.v_tilde)?.adjoint();
    normalize(raw, PrecoderKind::Zf)
}

pub fn precode(basis: &ReducedBasis, tx_antennas: usize, kind: PrecoderKind) -> Result<PrecodingMatrix> {
    match kind {
        PrecoderKind::Mrt => precode_mrt(basis, tx_antennas),
        PrecoderKind::Zf => precode_zf(basis, tx_antennas),
    }
}

fn check_antennas(basis: &ReducedBasis, tx_antennas: usize) -> Result<()> {
    if basis.v_tilde.ncols() != tx_antennas {
        return Err(Error::Shape(format!(
            "basis has {} columns, expected T = {tx_antennas}",
            basis.v_tilde.ncols()
        )));
    }
    Ok(())
}

/// Per-user detection matrices `G_k` (`L_k × R_k`).
#[derive(Debug, Clone, PartialEq)]
pub struct DetectionSet {
    pub g: Vec<CMatrix>,
    pub method: DetectorKind,
}

fn check_sigma2(sigma2: f64) -> Result<()> {
    if sigma2 > 0.0 && sigma2.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("sigma2 must be positive, got {sigma2}")))
    }
}

/// `G = Eᴴ (E Eᴴ + C)⁻¹` for effective channel `E` and Hermitian PD `C`.
fn linear_mmse(e: &CMatrix, mut covariance: CMatrix) -> Result<CMatrix> {
    covariance += e * e.adjoint();
    Ok(hpd_solve(covariance, e)?.adjoint())
}

fn noise(r: usize, sigma2: f64) -> CMatrix {
    CMatrix::identity(r, r) * Complex64::new(sigma2, 0.0)
}

/// MMSE detection for one user from its channel and its precoder columns.
pub fn detect_mmse(h_k: &CMatrix, w_k: &CMatrix, sigma2: f64) -> Result<CMatrix> {
    check_sigma2(sigma2)?;
    if h_k.ncols() != w_k.nrows() {
        return Err(Error::Shape(format!(
            "H_k is {}x{}, W_k is {}x{}",
            h_k.nrows(),
            h_k.ncols(),
            w_k.nrows(),
            w_k.ncols()
        )));
    }
    let e = h_k * w_k;
    linear_mmse(&e, noise(h_k.nrows(), sigma2))
}

/// `R_uu = Σ_{u≠k} (H_k W_u)(H_k W_u)ᴴ`.
pub fn interference_covariance(h_k: &CMatrix, w: &CMatrix, layers: &[usize], k: usize) -> CMatrix {
    let r = h_k.nrows();
    let mut ruu = CMatrix::zeros(r, r);
    for u in 0..layers.len() {
        if u == k {
            continue;
        }
        let cols = layer_range(layers, u);
        let e_u = h_k * w.columns(cols.start, cols.len());
        ruu += &e_u * e_u.adjoint();
    }
    ruu
}

/// `R_uu = H_k (W Wᴴ − W_k W_kᴴ) H_kᴴ`, the difference form.
pub fn interference_covariance_difference(h_k: &CMatrix, w: &CMatrix, layers: &[usize], k: usize) -> CMatrix {
    let cols = layer_range(layers, k);
    let w_k = w.columns(cols.start, cols.len());
    let inner = w * w.adjoint() - w_k * w_k.adjoint();
    h_k * inner * h_k.adjoint()
}

/// MMSE-IRC detection for user `k` against the full precoder.
pub fn detect_mmse_irc(h_k: &CMatrix, w: &CMatrix, layers: &[usize], k: usize, sigma2: f64) -> Result<CMatrix> {
    check_sigma2(sigma2)?;
    if h_k.ncols() != w.nrows() || layers.iter().sum::<usize>() != w.ncols() || k >= layers.len() {
        return Err(Error::Shape("H_k, W and layer split do not conform".into()));
    }
    let cols = layer_range(layers, k);
    let e_k = h_k * w.columns(cols.start, cols.len());
    let ruu = interference_covariance(h_k, w, layers, k);
    linear_mmse(&e_k, ruu + noise(h_k.nrows(), sigma2))
}

pub fn detect(obj: &ChannelObject, precoding: &PrecodingMatrix, kind: DetectorKind) -> Result<DetectionSet> {
    let layers = obj.layers();
    let g = obj
        .users
        .iter()
        .enumerate()
        .map(|(k, h)| match kind {
            DetectorKind::Mmse => detect_mmse(h, &precoding.user_columns(&layers, k), obj.sigma2),
            DetectorKind::MmseIrc => detect_mmse_irc(h, &precoding.w, &layers, k, obj.sigma2),
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(DetectionSet { g, method: kind })
}

/// SINR of layer `l` (global column index into `W`) received through the
/// detection row `g_l`.
pub fn sinr_layer(w: &CMatrix, h_k: &CMatrix, g_l: &[Complex64], l: usize, sigma2: f64) -> Result<f64> {
    check_sigma2(sigma2)?;
    if g_l.len() != h_k.nrows() || h_k.ncols() != w.nrows() || l >= w.ncols() {
        return Err(Error::Shape("g_l, H_k and W do not conform".into()));
    }
    let mut gh = vec![Complex64::new(0.0, 0.0); h_k.ncols()];
    for (i, g) in g_l.iter().enumerate() {
        for (j, acc) in gh.iter_mut().enumerate() {
            *acc += g * h_k[(i, j)];
        }
    }
    let mut signal = 0.0;
    let mut interference = 0.0;
    for c in 0..w.ncols() {
        let a: Complex64 = gh.iter().zip(w.column(c).iter()).map(|(x, y)| x * y).sum();
        if c == l {
            signal = a.norm_sqr();
        } else {
            interference += a.norm_sqr();
        }
    }
    let g_norm: f64 = g_l.iter().map(|z| z.norm_sqr()).sum();
    Ok(signal / (interference + sigma2 * g_norm))
}

/// Geometric mean of a user's layer SINRs; zero if any layer is zero.
pub fn sinr_eff(layer_sinrs: &[f64]) -> f64 {
    if layer_sinrs.is_empty() || layer_sinrs.iter().any(|&s| s <= 0.0) {
        return 0.0;
    }
    let prod: f64 = layer_sinrs.iter().product();
    prod.powf(1.0 / layer_sinrs.len() as f64)
}

/// Single-user SINR proxy from the matched singular values:
/// `(1/σ²) · (Π_k (1/L_k) · (Π_{l∈k} s_l²)^{1/L_k})^{1/K}`.
pub fn susinr(basis: &ReducedBasis, sigma2: f64) -> Result<f64> {
    let s2: Vec<f64> = basis.s_tilde.iter().map(|s| s * s).collect();
    susinr_from_squares(&basis.layers, &s2, sigma2)
}

/// As [`susinr`], from squared singular values laid out by `layers`.
pub fn susinr_from_squares(layers: &[usize], s2: &[f64], sigma2: f64) -> Result<f64> {
    check_sigma2(sigma2)?;
    if layers.is_empty() || layers.iter().sum::<usize>() != s2.len() {
        return Err(Error::Shape("singular values do not match layer split".into()));
    }
    // Log domain keeps large K from overflowing the nested products.
    let mut log_sum = 0.0;
    for k in 0..layers.len() {
        let r = layer_range(layers, k);
        let lk = layers[k] as f64;
        let block = &s2[r];
        if block.iter().any(|&v| v <= 0.0) {
            return Ok(0.0);
        }
        let mean_log: f64 = block.iter().map(|v| v.ln()).sum::<f64>() / lk;
        log_sum += mean_log - lk.ln();
    }
    Ok((log_sum / layers.len() as f64).exp() / sigma2)
}

/// Ground-truth quality figures for one object.
#[derive(Debug, Clone, PartialEq)]
pub struct SeReport {
    /// `(1/K) Σ_k L_k log₂(1 + SINR_k^eff)`, bits/s/Hz.
    pub se_avg: f64,
    /// `log₂(1 + SINR_k^eff)` per user.
    pub se_user: Vec<f64>,
    pub sinr_layers: Vec<f64>,
    pub susinr: f64,
    pub sigma2: f64,
}

impl SeReport {
    /// Average SE recomputed from the layer SINRs.
    pub fn recompute_average(&self, layers: &[usize]) -> f64 {
        let k = layers.len() as f64;
        (0..layers.len())
            .map(|u| {
                let eff = sinr_eff(&self.sinr_layers[layer_range(layers, u)]);
                layers[u] as f64 * (1.0 + eff).log2()
            })
            .sum::<f64>()
            / k
    }
}

pub fn spectral_efficiency(
    obj: &ChannelObject,
    basis: &ReducedBasis,
    precoding: &PrecodingMatrix,
    detection: &DetectionSet,
) -> Result<SeReport> {
    let layers = obj.layers();
    if detection.g.len() != obj.num_users() || precoding.w.ncols() != obj.total_layers() || basis.layers != layers {
        return Err(Error::Shape("precoder, detection and object do not conform".into()));
    }
    let w = &precoding.w;
    let mut sinr_layers = Vec::with_capacity(w.ncols());
    let mut se_user = Vec::with_capacity(obj.num_users());
    let mut se_sum = 0.0;
    for (k, (h, g)) in obj.users.iter().zip(&detection.g).enumerate() {
        let cols = layer_range(&layers, k);
        if g.shape() != (cols.len(), h.nrows()) {
            return Err(Error::Shape(format!("G_{k} has shape {:?}", g.shape())));
        }
        // Row i of A = G_k H_k W holds g_l H_k w_c for every column c.
        let a = g * (h * w);
        let mut user_sinrs = Vec::with_capacity(cols.len());
        for (i, l) in cols.clone().enumerate() {
            let row = a.row(i);
            let signal = row[l].norm_sqr();
            let interference: f64 = row
                .iter()
                .enumerate()
                .filter(|&(c, _)| c != l)
                .map(|(_, z)| z.norm_sqr())
                .sum();
            let g_norm: f64 = g.row(i).iter().map(|z| z.norm_sqr()).sum();
            let sinr = signal / (interference + obj.sigma2 * g_norm);
            user_sinrs.push(sinr);
        }
        let se_k = (1.0 + sinr_eff(&user_sinrs)).log2();
        se_sum += cols.len() as f64 * se_k;
        se_user.push(se_k);
        sinr_layers.extend(user_sinrs);
    }
    Ok(SeReport {
        se_avg: se_sum / obj.num_users() as f64,
        se_user,
        sinr_layers,
        susinr: susinr(basis, obj.sigma2)?,
        sigma2: obj.sigma2,
    })
}

/// Full pipeline: basis, precoder, detection, SE.
pub fn ground_truth(obj: &ChannelObject, precoder: PrecoderKind, detector: DetectorKind) -> Result<SeReport> {
    let basis = build_reduced_basis(obj)?;
    let w = precode(&basis, obj.tx_antennas(), precoder)?;
    let g = detect(obj, &w, detector)?;
    spectral_efficiency(obj, &basis, &w, &g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{generate_channel, ScenarioConfig};
    use crate::linalg::fro_norm;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    #[test]
    fn mrt_identity_basis() {
        let basis = ReducedBasis {
            v_tilde: CMatrix::identity(2, 2),
            s_tilde: vec![1.0, 1.0],
            layers: vec![1, 1],
        };
        let p = precode_mrt(&basis, 2).unwrap();
        let expected = 1.0 / 2f64.sqrt();
        assert!((p.mu - expected).abs() < 1e-15);
        assert!(fro_norm(&(&p.w - CMatrix::identity(2, 2) * c(expected))) < 1e-15);
    }

    #[test]
    fn zf_on_orthonormal_basis_equals_mrt() {
        let obj = generate_channel(&ScenarioConfig::iid(3), 1, 0).unwrap();
        let basis = build_reduced_basis(&obj).unwrap();
        let mrt = precode_mrt(&basis, 64).unwrap();
        let zf = precode_zf(&basis, 64).unwrap();
        assert!(fro_norm(&(&mrt.w - &zf.w)) < 1e-12);
    }

    #[test]
    fn duplicated_user_is_ill_conditioned() {
        let obj = generate_channel(&ScenarioConfig::iid(3), 1, 4).unwrap();
        let dup = ChannelObject::new(vec![obj.users[0].clone(), obj.users[0].clone()], 2, obj.sigma2, "dup").unwrap();
        let basis = build_reduced_basis(&dup).unwrap();
        assert!(matches!(precode_zf(&basis, 64), Err(Error::Conditioning(_))));
    }

    #[test]
    fn scalar_mmse() {
        let one = CMatrix::from_element(1, 1, c(1.0));
        let g = detect_mmse(&one, &one, 1.0).unwrap();
        assert!((g[(0, 0)] - c(0.5)).norm() < 1e-15);

        let zero = CMatrix::zeros(1, 1);
        let g = detect_mmse(&zero, &one, 1.0).unwrap();
        assert_eq!(g[(0, 0)], c(0.0));
    }

    #[test]
    fn mmse_rejects_nonpositive_noise() {
        let one = CMatrix::from_element(1, 1, c(1.0));
        assert!(detect_mmse(&one, &one, 0.0).is_err());
    }

    #[test]
    fn irc_single_user_matches_mmse() {
        let obj = generate_channel(&ScenarioConfig::urban(8), 1, 2).unwrap();
        let basis = build_reduced_basis(&obj).unwrap();
        let w = precode_zf(&basis, 64).unwrap();
        let layers = obj.layers();
        let ruu = interference_covariance(&obj.users[0], &w.w, &layers, 0);
        assert_eq!(fro_norm(&ruu), 0.0);
        let irc = detect_mmse_irc(&obj.users[0], &w.w, &layers, 0, obj.sigma2).unwrap();
        let mmse = detect_mmse(&obj.users[0], &w.w, obj.sigma2).unwrap();
        assert!(fro_norm(&(irc - mmse)) < 1e-14);
    }

    #[test]
    fn scalar_sinr() {
        let one = CMatrix::from_element(1, 1, c(1.0));
        let s = sinr_layer(&one, &one, &[c(1.0)], 0, 1.0).unwrap();
        assert!((s - 1.0).abs() < 1e-15);
    }

    #[test]
    fn two_layer_sinr() {
        let w = CMatrix::from_row_slice(1, 2, &[c(1.0), c(1.0)]);
        let h = CMatrix::from_element(1, 1, c(1.0));
        let s = sinr_layer(&w, &h, &[c(1.0)], 0, 1.0).unwrap();
        assert!((s - 0.5).abs() < 1e-15);
    }

    #[test]
    fn effective_sinr() {
        assert!((sinr_eff(&[4.0, 1.0]) - 2.0).abs() < 1e-15);
        assert_eq!(sinr_eff(&[3.5]), 3.5);
        assert_eq!(sinr_eff(&[0.0, 9.0]), 0.0);
    }

    #[test]
    fn susinr_examples() {
        let b1 = ReducedBasis {
            v_tilde: CMatrix::identity(1, 4),
            s_tilde: vec![2.0],
            layers: vec![1],
        };
        assert!((susinr(&b1, 1.0).unwrap() - 4.0).abs() < 1e-14);
        let b2 = ReducedBasis {
            v_tilde: CMatrix::identity(2, 4),
            s_tilde: vec![2.0, 2.0],
            layers: vec![2],
        };
        assert!((susinr(&b2, 1.0).unwrap() - 2.0).abs() < 1e-14);
        let half = susinr(&b2, 2.0).unwrap();
        assert!((half - 1.0).abs() < 1e-14);
    }

    #[test]
    fn se_from_known_sinrs() {
        // K=1, L=1, SINR=1: h=1, w=1, g chosen so that SINR = 1 with sigma2=1.
        let report = SeReport {
            se_avg: 0.0,
            se_user: vec![],
            sinr_layers: vec![1.0],
            susinr: 0.0,
            sigma2: 1.0,
        };
        assert!((report.recompute_average(&[1]) - 1.0).abs() < 1e-15);
        let report = SeReport {
            sinr_layers: vec![1.0, 3.0],
            ..report
        };
        assert!((report.recompute_average(&[1, 1]) - 1.5).abs() < 1e-15);
    }

    #[test]
    fn scalar_pipeline_se() {
        // One user, one layer, one antenna each side: W = 1, G = 1, σ² = 1.
        let one = CMatrix::from_element(1, 1, c(1.0));
        let obj = ChannelObject::new(vec![one.clone()], 1, 1.0, "scalar").unwrap();
        let basis = build_reduced_basis(&obj).unwrap();
        let w = PrecodingMatrix {
            w: one.clone(),
            mu: 1.0,
            p: vec![1.0],
            method: PrecoderKind::Mrt,
        };
        let g = DetectionSet {
            g: vec![one],
            method: DetectorKind::Mmse,
        };
        let r = spectral_efficiency(&obj, &basis, &w, &g).unwrap();
        assert!((r.se_avg - 1.0).abs() < 1e-15);
    }

    #[test]
    fn parse_kinds() {
        assert_eq!("ZF".parse::<PrecoderKind>().unwrap(), PrecoderKind::Zf);
        assert_eq!("irc".parse::<DetectorKind>().unwrap(), DetectorKind::MmseIrc);
        assert!("lbfgs".parse::<PrecoderKind>().is_err());
    }
}
