//! Fixed-length feature vectors derived from per-user SVDs.
//!
//! The raw ingredients are each user's top-`L_k` squared singular values and
//! the pairwise layer correlations `|v_ik · v_jmᴴ|²` between the selected
//! right-singular rows of distinct users. Three layouts are built on top:
//!
//! - `default`: raw blocks in user order (fixed `K` only);
//! - `sorted`: users ordered by their largest `s²`, user pairs by their
//!   largest correlation, values descending within blocks (fixed `K` only);
//! - `poly_k`: elementary symmetric polynomials `e_1..e_k` of the multiset of
//!   all `s²` and, separately, of all correlations. Length does not depend on
//!   `K`.
//!
//! Ordered pairs `(i, j)` and `(j, i)` are both kept, so each correlation
//! appears twice in the `default` and `sorted` layouts.

use std::fmt;
use std::str::FromStr;

use crate::channel::ChannelObject;
use crate::error::{Error, Result};
use crate::linalg::{row_dot, svd_rows};
use crate::mimo::susinr_from_squares;
use crate::table::Table;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FeatureScheme {
    Default,
    Sorted,
    Poly(usize),
}

impl fmt::Display for FeatureScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FeatureScheme::Default => f.write_str("default"),
            FeatureScheme::Sorted => f.write_str("sorted"),
            FeatureScheme::Poly(k) => write!(f, "poly{k}"),
        }
    }
}

impl FromStr for FeatureScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        match s.as_str() {
            "default" => Ok(FeatureScheme::Default),
            "sorted" => Ok(FeatureScheme::Sorted),
            _ => {
                let k = s
                    .strip_prefix("poly")
                    .map(|r| r.trim_start_matches('_'))
                    .and_then(|r| r.parse::<usize>().ok())
                    .ok_or_else(|| Error::Config(format!("unknown feature scheme {s:?}")))?;
                if k == 0 {
                    return Err(Error::Config("poly_k requires k >= 1".into()));
                }
                Ok(FeatureScheme::Poly(k))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct FeatureSpec {
    pub scheme: FeatureScheme,
    pub include_susinr: bool,
    pub include_sigma2: bool,
}

impl FeatureSpec {
    pub fn new(scheme: FeatureScheme) -> Self {
        FeatureSpec {
            scheme,
            include_susinr: false,
            include_sigma2: false,
        }
    }

    pub fn with_susinr(mut self, on: bool) -> Self {
        self.include_susinr = on;
        self
    }

    pub fn with_sigma2(mut self, on: bool) -> Self {
        self.include_sigma2 = on;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.scheme == FeatureScheme::Poly(0) {
            return Err(Error::Config("poly_k requires k >= 1".into()));
        }
        Ok(())
    }

    pub fn requires_fixed_users(&self) -> bool {
        !matches!(self.scheme, FeatureScheme::Poly(_))
    }

    fn extras(&self) -> usize {
        usize::from(self.include_susinr) + usize::from(self.include_sigma2)
    }

    /// Average-SE feature names for `k` users with `l` layers each.
    pub fn names(&self, k: usize, l: usize) -> Vec<String> {
        let mut names = Vec::new();
        match self.scheme {
            FeatureScheme::Default | FeatureScheme::Sorted => {
                let p = if self.scheme == FeatureScheme::Sorted {
                    "rank"
                } else {
                    "u"
                };
                for i in 0..k {
                    for a in 0..l {
                        names.push(format!("s2_{p}{i}_l{a}"));
                    }
                }
                let mut block = 0;
                for i in 0..k {
                    for j in 0..k {
                        if i == j {
                            continue;
                        }
                        for a in 0..l {
                            for b in 0..l {
                                names.push(if self.scheme == FeatureScheme::Sorted {
                                    format!("corr_pair{block}_{}", a * l + b)
                                } else {
                                    format!("corr_u{i}_u{j}_l{a}_l{b}")
                                });
                            }
                        }
                        block += 1;
                    }
                }
            }
            FeatureScheme::Poly(d) => {
                names.extend((1..=d).map(|e| format!("e{e}_s2")));
                names.extend((1..=d).map(|e| format!("e{e}_corr")));
            }
        }
        self.push_extra_names(&mut names);
        names
    }

    /// User-wise feature names for `k` users with `l` layers each.
    pub fn user_names(&self, k: usize, l: usize) -> Vec<String> {
        let mut names: Vec<String> = (0..l).map(|a| format!("own_s2_l{a}")).collect();
        match self.scheme {
            FeatureScheme::Default | FeatureScheme::Sorted => {
                for o in 0..k.saturating_sub(1) {
                    for a in 0..l {
                        names.push(format!("other{o}_s2_l{a}"));
                    }
                    for c in 0..l * l {
                        names.push(format!("other{o}_corr{c}"));
                    }
                }
            }
            FeatureScheme::Poly(d) => {
                names.extend((1..=d).map(|e| format!("e{e}_other_s2")));
                names.extend((1..=d).map(|e| format!("e{e}_own_corr")));
            }
        }
        self.push_extra_names(&mut names);
        names
    }

    fn push_extra_names(&self, names: &mut Vec<String>) {
        if self.include_susinr {
            names.push("susinr".into());
        }
        if self.include_sigma2 {
            names.push("sigma2".into());
        }
    }

    pub fn len(&self, k: usize, l: usize) -> usize {
        let body = match self.scheme {
            FeatureScheme::Default | FeatureScheme::Sorted => k * l + k * (k - 1) * l * l,
            FeatureScheme::Poly(d) => 2 * d,
        };
        body + self.extras()
    }

    pub fn user_len(&self, k: usize, l: usize) -> usize {
        let body = match self.scheme {
            FeatureScheme::Default | FeatureScheme::Sorted => l + k.saturating_sub(1) * (l + l * l),
            FeatureScheme::Poly(d) => l + 2 * d,
        };
        body + self.extras()
    }
}

/// Per-object ingredients shared by every layout, stored flat.
#[derive(Debug, Clone, PartialEq)]
pub struct RawFeatures {
    num_users: usize,
    layers: usize,
    /// Top-`L` squared singular values per user, descending; user `i` owns
    /// `singular_sq[i * L..(i + 1) * L]`.
    singular_sq: Vec<f64>,
    /// One `L × L` block per ordered pair `i ≠ j`, in `(i, j)` lexicographic
    /// order; entry `a * L + b` is `|v_ia · v_jbᴴ|²`.
    correlations: Vec<f64>,
}

impl RawFeatures {
    pub fn num_users(&self) -> usize {
        self.num_users
    }

    pub fn layers_per_user(&self) -> usize {
        self.layers
    }

    /// Squared singular values of `user`, descending.
    pub fn singular_sq(&self, user: usize) -> &[f64] {
        &self.singular_sq[user * self.layers..(user + 1) * self.layers]
    }

    fn block_len(&self) -> usize {
        self.layers * self.layers
    }

    fn block_index(&self, i: usize, j: usize) -> usize {
        // Diagonal pairs are skipped.
        i * (self.num_users - 1) + if j > i { j - 1 } else { j }
    }

    /// Correlation block of the ordered pair `(i, j)`, `i ≠ j`.
    pub fn block(&self, i: usize, j: usize) -> &[f64] {
        assert!(i != j && i.max(j) < self.num_users, "bad user pair ({i}, {j})");
        let n = self.block_len();
        let at = self.block_index(i, j) * n;
        &self.correlations[at..at + n]
    }

    pub fn susinr(&self, sigma2: f64) -> Result<f64> {
        susinr_from_squares(&vec![self.layers; self.num_users], &self.singular_sq, sigma2)
    }
}

pub fn extract_raw(obj: &ChannelObject) -> Result<RawFeatures> {
    obj.check_shape()?;
    let l = obj.layers_per_user;
    let k = obj.num_users();
    let t = obj.tx_antennas();
    let mut singular_sq = Vec::with_capacity(k * l);
    // Top-L right-singular rows of every user, row-major.
    let mut v = Vec::with_capacity(k * l * t);
    for h in &obj.users {
        let d = svd_rows(h)?;
        singular_sq.extend(d.s[..l].iter().map(|s| s * s));
        v.extend_from_slice(&d.v[..l * t]);
    }
    let v_row = |i: usize, a: usize| &v[(i * l + a) * t..(i * l + a + 1) * t];

    let n = l * l;
    let mut raw = RawFeatures {
        num_users: k,
        layers: l,
        singular_sq,
        correlations: vec![0.0; k * (k - 1) * n],
    };
    for i in 0..k {
        for j in i + 1..k {
            let (ij, ji) = (raw.block_index(i, j) * n, raw.block_index(j, i) * n);
            for a in 0..l {
                for b in 0..l {
                    let c = row_dot(v_row(i, a), v_row(j, b)).norm_sqr();
                    raw.correlations[ij + a * l + b] = c;
                    raw.correlations[ji + b * l + a] = c;
                }
            }
        }
    }
    Ok(raw)
}

fn desc(a: &f64, b: &f64) -> std::cmp::Ordering {
    b.total_cmp(a)
}

/// Appends `values` sorted descending.
fn push_sorted(out: &mut Vec<f64>, values: &[f64]) {
    let at = out.len();
    out.extend_from_slice(values);
    out[at..].sort_by(desc);
}

/// Permutation-invariant `sorted` layout body: users by their largest `s²`,
/// pair blocks by their largest correlation, values descending within each
/// group. Ties keep their original order.
pub fn sorted_layout(raw: &RawFeatures) -> Vec<f64> {
    let (k, l, n) = (raw.num_users, raw.layers, raw.block_len());
    let mut out = Vec::with_capacity(raw.singular_sq.len() + raw.correlations.len());

    let mut users: Vec<(f64, usize)> = (0..k)
        .map(|i| (raw.singular_sq(i).iter().copied().fold(f64::NEG_INFINITY, f64::max), i))
        .collect();
    users.sort_by(|a, b| desc(&a.0, &b.0));
    for &(_, i) in &users {
        push_sorted(&mut out, raw.singular_sq(i));
    }

    let mut blocks: Vec<f64> = Vec::with_capacity(raw.correlations.len());
    for block in raw.correlations.chunks_exact(n.max(1)) {
        push_sorted(&mut blocks, block);
    }
    let mut order: Vec<usize> = (0..blocks.len() / n.max(1)).collect();
    order.sort_by(|&a, &b| desc(&blocks[a * n], &blocks[b * n]));
    for b in order {
        out.extend_from_slice(&blocks[b * n..(b + 1) * n]);
    }
    debug_assert_eq!(out.len(), k * l + raw.correlations.len());
    out
}

/// `e_1..e_k` of the multiset `values`, by incremental expansion of
/// `Π (1 + x_i t)`. Entries beyond the multiset size are zero.
pub fn elementary_symmetric(values: &[f64], k: usize) -> Vec<f64> {
    let mut e = vec![0.0; k + 1];
    e[0] = 1.0;
    for (n, &x) in values.iter().enumerate() {
        for j in (1..=k.min(n + 1)).rev() {
            e[j] += x * e[j - 1];
        }
    }
    e.remove(0);
    e
}

fn push_extras(spec: &FeatureSpec, raw: &RawFeatures, sigma2: f64, out: &mut Vec<f64>) -> Result<()> {
    if spec.include_susinr {
        out.push(raw.susinr(sigma2)?);
    }
    if spec.include_sigma2 {
        out.push(sigma2);
    }
    Ok(())
}

/// Average-SE feature vector from precomputed raw features.
pub fn assemble_raw(raw: &RawFeatures, sigma2: f64, spec: &FeatureSpec) -> Result<Vec<f64>> {
    spec.validate()?;
    let mut out = match spec.scheme {
        FeatureScheme::Default => [raw.singular_sq.as_slice(), &raw.correlations].concat(),
        FeatureScheme::Sorted => sorted_layout(raw),
        FeatureScheme::Poly(d) => {
            let mut out = elementary_symmetric(&raw.singular_sq, d);
            out.extend(elementary_symmetric(&raw.correlations, d));
            out
        }
    };
    push_extras(spec, raw, sigma2, &mut out)?;
    Ok(out)
}

pub fn assemble(obj: &ChannelObject, spec: &FeatureSpec) -> Result<Vec<f64>> {
    assemble_raw(&extract_raw(obj)?, obj.sigma2, spec)
}

/// Feature vector describing user `user` against the rest of the pairing.
pub fn assemble_user(raw: &RawFeatures, sigma2: f64, user: usize, spec: &FeatureSpec) -> Result<Vec<f64>> {
    spec.validate()?;
    let k = raw.num_users();
    if user >= k {
        return Err(Error::InvalidArgument(format!("user {user} out of range for K = {k}")));
    }
    let mut out = Vec::with_capacity(spec.user_len(k, raw.layers));
    push_sorted(&mut out, raw.singular_sq(user));
    let others: Vec<usize> = (0..k).filter(|&j| j != user).collect();
    match spec.scheme {
        FeatureScheme::Default => {
            for &j in &others {
                out.extend_from_slice(raw.singular_sq(j));
                out.extend_from_slice(raw.block(user, j));
            }
        }
        FeatureScheme::Sorted => {
            let peak = |j: usize| raw.block(user, j).iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut order = others;
            order.sort_by(|&a, &b| desc(&peak(a), &peak(b)));
            for j in order {
                push_sorted(&mut out, raw.singular_sq(j));
                push_sorted(&mut out, raw.block(user, j));
            }
        }
        FeatureScheme::Poly(d) => {
            let s2: Vec<f64> = others
                .iter()
                .flat_map(|&j| raw.singular_sq(j).iter().copied())
                .collect();
            let corr: Vec<f64> = others
                .iter()
                .flat_map(|&j| raw.block(user, j).iter().copied())
                .collect();
            out.extend(elementary_symmetric(&s2, d));
            out.extend(elementary_symmetric(&corr, d));
        }
    }
    push_extras(spec, raw, sigma2, &mut out)?;
    Ok(out)
}

/// Checks that `spec` can lay out every object, returning the common
/// `(K, L_k)` (for `poly_k`, `K` of the first object).
pub fn check_compatible(objects: &[ChannelObject], spec: &FeatureSpec) -> Result<(usize, usize)> {
    let first = objects
        .first()
        .ok_or_else(|| Error::InvalidArgument("no objects to featurize".into()))?;
    let (k, l) = (first.num_users(), first.layers_per_user);
    if objects.iter().any(|o| o.layers_per_user != l) {
        return Err(Error::Config("objects disagree on layers per user".into()));
    }
    if spec.requires_fixed_users() && objects.iter().any(|o| o.num_users() != k) {
        return Err(Error::Config(format!(
            "{} features require a fixed number of users",
            spec.scheme
        )));
    }
    Ok((k, l))
}

/// Average-SE features for a whole dataset, one row per object.
pub fn featurize(objects: &[ChannelObject], spec: &FeatureSpec) -> Result<Table> {
    let (k, l) = check_compatible(objects, spec)?;
    let mut table = Table::new(spec.names(k, l));
    for obj in objects {
        table.push_row(&assemble(obj, spec)?)?;
    }
    Ok(table)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Inverse,
}

/// Per-column standardization fitted on training data. Constant columns are
/// dropped by the forward transform and restored by the inverse one.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizationStats {
    pub feature_mean: Vec<f64>,
    pub feature_std: Vec<f64>,
    /// Indices of constant columns.
    pub dropped: Vec<usize>,
    pub target_mean: f64,
    pub target_std: f64,
}

fn moments(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

fn is_constant(mean: f64, std: f64) -> bool {
    !(std > 1e-12 * (1.0 + mean.abs()))
}

pub fn fit_normalizer(features: &Table, targets: &[f64]) -> Result<NormalizationStats> {
    let n = features.n_rows();
    if n < 2 || targets.len() != n {
        return Err(Error::InvalidArgument(format!(
            "normalizer needs >= 2 samples with matching targets (rows {n}, targets {})",
            targets.len()
        )));
    }
    if targets.iter().any(|t| !t.is_finite()) {
        return Err(Error::NonFinite("targets"));
    }
    let (target_mean, target_std) = moments(targets);
    if is_constant(target_mean, target_std) {
        return Err(Error::ZeroVarianceTarget);
    }
    let mut feature_mean = Vec::with_capacity(features.n_cols());
    let mut feature_std = Vec::with_capacity(features.n_cols());
    let mut dropped = Vec::new();
    for j in 0..features.n_cols() {
        let (m, s) = moments(&features.column(j));
        if !(m.is_finite() && s.is_finite()) {
            return Err(Error::NonFinite("features"));
        }
        if is_constant(m, s) {
            dropped.push(j);
        }
        feature_mean.push(m);
        feature_std.push(s);
    }
    Ok(NormalizationStats {
        feature_mean,
        feature_std,
        dropped,
        target_mean,
        target_std,
    })
}

impl NormalizationStats {
    pub fn input_len(&self) -> usize {
        self.feature_mean.len()
    }

    /// Number of columns after the forward transform.
    pub fn output_len(&self) -> usize {
        self.input_len() - self.dropped.len()
    }

    pub fn kept(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.input_len()).filter(move |j| self.dropped.binary_search(j).is_err())
    }

    pub fn forward_row(&self, row: &[f64]) -> Result<Vec<f64>> {
        if row.len() != self.input_len() {
            return Err(Error::Shape(format!(
                "expected {} features, got {}",
                self.input_len(),
                row.len()
            )));
        }
        Ok(self
            .kept()
            .map(|j| (row[j] - self.feature_mean[j]) / self.feature_std[j])
            .collect())
    }

    pub fn inverse_row(&self, z: &[f64]) -> Result<Vec<f64>> {
        if z.len() != self.output_len() {
            return Err(Error::Shape(format!(
                "expected {} normalized features, got {}",
                self.output_len(),
                z.len()
            )));
        }
        let mut out = self.feature_mean.clone();
        for (zi, j) in z.iter().zip(self.kept()) {
            out[j] = zi * self.feature_std[j] + self.feature_mean[j];
        }
        Ok(out)
    }

    pub fn apply_features(&self, features: &Table, direction: Direction) -> Result<Table> {
        let columns: Vec<String> = match direction {
            Direction::Forward => self.kept().map(|j| features.columns[j].clone()).collect(),
            Direction::Inverse => (0..self.input_len()).map(|j| format!("f{j}")).collect(),
        };
        let mut out = Table::new(columns);
        for r in features.rows() {
            let row = match direction {
                Direction::Forward => self.forward_row(r)?,
                Direction::Inverse => self.inverse_row(r)?,
            };
            out.push_row(&row)?;
        }
        Ok(out)
    }

    pub fn forward_target(&self, y: f64) -> f64 {
        (y - self.target_mean) / self.target_std
    }

    pub fn inverse_target(&self, z: f64) -> f64 {
        z * self.target_std + self.target_mean
    }

    pub fn apply_targets(&self, targets: &[f64], direction: Direction) -> Vec<f64> {
        targets
            .iter()
            .map(|&t| match direction {
                Direction::Forward => self.forward_target(t),
                Direction::Inverse => self.inverse_target(t),
            })
            .collect()
    }
}
