//! Synthetic multi-user downlink channels and the `SEDS` dataset container.
//!
//! Two generator families are provided. The geometric family builds each
//! user's channel as a sum of planar-wavefront steering-vector outer products
//! between a uniform linear array at the base station and one at the user,
//! with complex Gaussian path gains and an optional line-of-sight component.
//! The `iid` family draws every entry from a standard complex Gaussian.
//!
//! Every draw is a pure function of `(config, sample_index)`: the random
//! stream is derived from the config seed and the index, never from shared
//! state, so datasets can be generated in parallel and regenerated exactly.

use std::f64::consts::PI;
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::codec::{Reader, Writer};
use crate::error::{Error, Result};
use crate::linalg::{svd, CMatrix};

pub const RX_ANTENNAS: usize = 4;
pub const TX_ANTENNAS: usize = 64;
pub const LAYERS_PER_USER: usize = 2;

/// Number of redraws allowed after a rank-deficient draw.
pub const RANK_RETRIES: u32 = 8;

/// A user channel has full layer rank when its `L`-th singular value exceeds
/// this fraction of the largest one.
pub const RANK_TOLERANCE: f64 = 1e-10;

/// Rician K-factor of the line-of-sight path in geometric channels.
const LOS_K_FACTOR: f64 = 3.0;

const SALT_CHANNEL: u64 = 0x6368_616e;
const SALT_USERS: u64 = 0x7573_6572;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ScenarioKind {
    UrbanAnalog,
    RuralAnalog,
    Iid,
}

impl ScenarioKind {
    pub fn tag(self) -> &'static str {
        match self {
            ScenarioKind::UrbanAnalog => "urban",
            ScenarioKind::RuralAnalog => "rural",
            ScenarioKind::Iid => "iid",
        }
    }
}

impl fmt::Display for ScenarioKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for ScenarioKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "urban" | "urban_analog" => Ok(ScenarioKind::UrbanAnalog),
            "rural" | "rural_analog" => Ok(ScenarioKind::RuralAnalog),
            "iid" => Ok(ScenarioKind::Iid),
            other => Err(Error::Config(format!("unknown scenario {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub kind: ScenarioKind,
    /// Multipath cluster count (geometric kinds only).
    pub num_paths: usize,
    /// Standard deviation of departure angles around a user's mean angle.
    pub angular_spread_deg: f64,
    pub los_probability: f64,
    /// Path `p` carries power proportional to `exp(-decay * p)`.
    pub path_gain_decay: f64,
    /// `(min, max)`, sampled log-uniformly per object.
    pub noise_variance_range: (f64, f64),
    pub seed: u64,
    pub rx_antennas: usize,
    pub tx_antennas: usize,
    pub layers_per_user: usize,
}

impl ScenarioConfig {
    fn base(kind: ScenarioKind, seed: u64) -> Self {
        ScenarioConfig {
            kind,
            num_paths: 1,
            angular_spread_deg: 1.0,
            los_probability: 0.0,
            path_gain_decay: 1.0,
            noise_variance_range: (1e-3, 1.0),
            seed,
            rx_antennas: RX_ANTENNAS,
            tx_antennas: TX_ANTENNAS,
            layers_per_user: LAYERS_PER_USER,
        }
    }

    /// Dense scattering: many clusters, wide angular spread, rare LOS.
    pub fn urban(seed: u64) -> Self {
        ScenarioConfig {
            num_paths: 20,
            angular_spread_deg: 10.0,
            los_probability: 0.1,
            path_gain_decay: 0.15,
            ..Self::base(ScenarioKind::UrbanAnalog, seed)
        }
    }

    /// Sparse scattering: few clusters, narrow spread, frequent LOS.
    pub fn rural(seed: u64) -> Self {
        ScenarioConfig {
            num_paths: 6,
            angular_spread_deg: 4.0,
            los_probability: 0.6,
            path_gain_decay: 0.5,
            ..Self::base(ScenarioKind::RuralAnalog, seed)
        }
    }

    pub fn iid(seed: u64) -> Self {
        Self::base(ScenarioKind::Iid, seed)
    }

    pub fn preset(kind: ScenarioKind, seed: u64) -> Self {
        match kind {
            ScenarioKind::UrbanAnalog => Self::urban(seed),
            ScenarioKind::RuralAnalog => Self::rural(seed),
            ScenarioKind::Iid => Self::iid(seed),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.noise_variance_range;
        if !(lo > 0.0 && hi >= lo && hi.is_finite()) {
            return Err(Error::Config(format!(
                "noise variance range must satisfy 0 < min <= max, got ({lo}, {hi})"
            )));
        }
        if self.num_paths == 0 {
            return Err(Error::Config("num_paths must be positive".into()));
        }
        if !(self.angular_spread_deg > 0.0) {
            return Err(Error::Config("angular_spread_deg must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.los_probability) {
            return Err(Error::Config("los_probability must lie in [0, 1]".into()));
        }
        if !(self.path_gain_decay > 0.0) {
            return Err(Error::Config("path_gain_decay must be positive".into()));
        }
        if self.layers_per_user == 0 || self.layers_per_user > self.rx_antennas || self.rx_antennas > self.tx_antennas {
            return Err(Error::Config(format!(
                "need 0 < L ({}) <= R ({}) <= T ({})",
                self.layers_per_user, self.rx_antennas, self.tx_antennas
            )));
        }
        Ok(())
    }
}

/// One sample: per-user channel matrices `H_k ∈ C^{R×T}` plus noise level.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelObject {
    pub users: Vec<CMatrix>,
    pub layers_per_user: usize,
    pub sigma2: f64,
    pub scenario_tag: String,
}

impl ChannelObject {
    pub fn new(
        users: Vec<CMatrix>,
        layers_per_user: usize,
        sigma2: f64,
        scenario_tag: impl Into<String>,
    ) -> Result<Self> {
        let obj = ChannelObject {
            users,
            layers_per_user,
            sigma2,
            scenario_tag: scenario_tag.into(),
        };
        obj.check_shape()?;
        Ok(obj)
    }

    pub fn num_users(&self) -> usize {
        self.users.len()
    }

    pub fn rx_antennas(&self) -> usize {
        self.users.first().map_or(0, |h| h.nrows())
    }

    pub fn tx_antennas(&self) -> usize {
        self.users.first().map_or(0, |h| h.ncols())
    }

    /// Total layer count `L = K · L_k`.
    pub fn total_layers(&self) -> usize {
        self.users.len() * self.layers_per_user
    }

    pub fn layers(&self) -> Vec<usize> {
        vec![self.layers_per_user; self.users.len()]
    }

    /// Same object with users reordered: `out.users[i] = self.users[perm[i]]`.
    pub fn permuted(&self, perm: &[usize]) -> ChannelObject {
        ChannelObject {
            users: perm.iter().map(|&i| self.users[i].clone()).collect(),
            ..self.clone()
        }
    }

    pub fn check_shape(&self) -> Result<()> {
        let Some(first) = self.users.first() else {
            return Err(Error::Shape("channel object has no users".into()));
        };
        let (r, t) = first.shape();
        if self.users.iter().any(|h| h.shape() != (r, t)) {
            return Err(Error::Shape("users have differing channel shapes".into()));
        }
        if self.layers_per_user == 0 || self.layers_per_user > r || r > t {
            return Err(Error::Shape(format!(
                "need 0 < L_k ({}) <= R ({r}) <= T ({t})",
                self.layers_per_user
            )));
        }
        if !(self.sigma2 > 0.0 && self.sigma2.is_finite()) {
            return Err(Error::Shape(format!("sigma2 must be positive, got {}", self.sigma2)));
        }
        Ok(())
    }
}

/// Number of users per object: fixed, or drawn uniformly from a set.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum UserCount {
    Fixed(usize),
    Set(Vec<usize>),
}

impl UserCount {
    pub fn validate(&self) -> Result<()> {
        match self {
            UserCount::Fixed(0) => Err(Error::Config("user count must be >= 1".into())),
            UserCount::Set(s) if s.is_empty() || s.contains(&0) => Err(Error::Config(
                "user count set must be nonempty with positive entries".into(),
            )),
            _ => Ok(()),
        }
    }

    pub fn is_fixed(&self) -> bool {
        match self {
            UserCount::Fixed(_) => true,
            UserCount::Set(s) => s.len() == 1,
        }
    }

    pub fn values(&self) -> Vec<usize> {
        match self {
            UserCount::Fixed(k) => vec![*k],
            UserCount::Set(s) => s.clone(),
        }
    }

    /// Deterministic per-index draw.
    pub fn draw(&self, seed: u64, index: u64) -> usize {
        match self {
            UserCount::Fixed(k) => *k,
            UserCount::Set(s) => {
                let mut rng = stream(seed, index, SALT_USERS, 0);
                s[rng.random_range(0..s.len())]
            }
        }
    }
}

impl fmt::Display for UserCount {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let v: Vec<String> = self.values().iter().map(|k| k.to_string()).collect();
        f.write_str(&v.join(","))
    }
}

impl FromStr for UserCount {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let vals = s
            .trim()
            .trim_matches(|c| c == '{' || c == '}')
            .split(',')
            .map(|p| {
                p.trim()
                    .parse::<usize>()
                    .map_err(|_| Error::Config(format!("bad user count {p:?}")))
            })
            .collect::<Result<Vec<_>>>()?;
        let uc = if vals.len() == 1 {
            UserCount::Fixed(vals[0])
        } else {
            UserCount::Set(vals)
        };
        uc.validate()?;
        Ok(uc)
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn stream(seed: u64, index: u64, salt: u64, attempt: u32) -> ChaCha8Rng {
    let mut h = splitmix64(seed ^ salt);
    h = splitmix64(h ^ index);
    h = splitmix64(h ^ u64::from(attempt));
    ChaCha8Rng::seed_from_u64(h)
}

fn complex_gaussian(rng: &mut ChaCha8Rng, variance: f64) -> Complex64 {
    let scale = (variance / 2.0).sqrt();
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    Complex64::new(re * scale, im * scale)
}

/// Half-wavelength ULA response, unit norm.
fn steering(n: usize, angle: f64) -> Vec<Complex64> {
    let norm = 1.0 / (n as f64).sqrt();
    (0..n)
        .map(|i| Complex64::from_polar(norm, PI * i as f64 * angle.sin()))
        .collect()
}

fn draw_geometric(cfg: &ScenarioConfig, rng: &mut ChaCha8Rng) -> CMatrix {
    let (r, t) = (cfg.rx_antennas, cfg.tx_antennas);
    let spread = cfg.angular_spread_deg.to_radians();
    let mean_aod = rng.random_range(-PI / 3.0..PI / 3.0);
    let los = rng.random::<f64>() < cfg.los_probability;

    let mut powers: Vec<f64> = (0..cfg.num_paths)
        .map(|p| (-cfg.path_gain_decay * p as f64).exp())
        .collect();
    let total: f64 = powers.iter().sum();
    let nlos_share = if los { 1.0 / (1.0 + LOS_K_FACTOR) } else { 1.0 };
    for p in &mut powers {
        *p *= nlos_share / total;
    }

    let scale = ((r * t) as f64).sqrt();
    let mut h = CMatrix::zeros(r, t);
    let mut add_path = |gain: Complex64, aod: f64, aoa: f64| {
        let at = steering(t, aod);
        let ar = steering(r, aoa);
        for i in 0..r {
            let gi = gain * ar[i] * scale;
            for j in 0..t {
                h[(i, j)] += gi * at[j].conj();
            }
        }
    };
    if los {
        let phase = rng.random_range(0.0..2.0 * PI);
        let aoa = rng.random_range(-PI..PI);
        let amp = (LOS_K_FACTOR / (1.0 + LOS_K_FACTOR)).sqrt();
        add_path(Complex64::from_polar(amp, phase), mean_aod, aoa);
    }
    for &power in &powers {
        let offset: f64 = StandardNormal.sample(rng);
        let aod = mean_aod + spread * offset;
        let aoa = rng.random_range(-PI..PI);
        let gain = complex_gaussian(rng, power);
        add_path(gain, aod, aoa);
    }
    h
}

fn draw_iid(cfg: &ScenarioConfig, rng: &mut ChaCha8Rng) -> CMatrix {
    CMatrix::from_fn(cfg.rx_antennas, cfg.tx_antennas, |_, _| complex_gaussian(rng, 1.0))
}

/// One raw draw for `(index, attempt)`, with no rank check.
pub fn draw_candidate(cfg: &ScenarioConfig, users: usize, sample_index: u64, attempt: u32) -> Result<ChannelObject> {
    cfg.validate()?;
    if users == 0 {
        return Err(Error::InvalidArgument("user count must be >= 1".into()));
    }
    let mut rng = stream(cfg.seed, sample_index, SALT_CHANNEL, attempt);
    let (lo, hi) = cfg.noise_variance_range;
    let sigma2 = if hi > lo {
        (rng.random_range(lo.ln()..hi.ln())).exp()
    } else {
        lo
    };
    let h = (0..users)
        .map(|_| match cfg.kind {
            ScenarioKind::Iid => draw_iid(cfg, &mut rng),
            _ => draw_geometric(cfg, &mut rng),
        })
        .collect();
    ChannelObject::new(h, cfg.layers_per_user, sigma2, cfg.kind.tag())
}

/// Whether every user has at least `layers_per_user` significant singular values.
pub fn has_layer_rank(obj: &ChannelObject) -> Result<bool> {
    let l = obj.layers_per_user;
    for h in &obj.users {
        let s = svd(h)?.s;
        if !(s[0] > 0.0 && s[l - 1] > RANK_TOLERANCE * s[0]) {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Generates sample `sample_index` with `users` users, redrawing up to
/// [`RANK_RETRIES`] times when some user's channel is rank-deficient.
pub fn generate_channel(cfg: &ScenarioConfig, users: usize, sample_index: u64) -> Result<ChannelObject> {
    for attempt in 0..=RANK_RETRIES {
        let obj = draw_candidate(cfg, users, sample_index, attempt)?;
        if has_layer_rank(&obj)? {
            return Ok(obj);
        }
    }
    Err(Error::Generation {
        index: sample_index,
        attempts: RANK_RETRIES + 1,
    })
}

/// Generates samples `0..n`.
pub fn generate_dataset(cfg: &ScenarioConfig, n: usize, user_count: &UserCount) -> Result<Vec<ChannelObject>> {
    generate_range(cfg, 0, n, user_count)
}

/// Generates samples `start..start + n`. Disjoint ranges give disjoint
/// samples from the same scenario stream.
pub fn generate_range(
    cfg: &ScenarioConfig,
    start: u64,
    n: usize,
    user_count: &UserCount,
) -> Result<Vec<ChannelObject>> {
    if n == 0 {
        return Err(Error::InvalidArgument("dataset size must be >= 1".into()));
    }
    cfg.validate()?;
    user_count.validate()?;
    (start..start + n as u64)
        .into_par_iter()
        .map(|i| generate_channel(cfg, user_count.draw(cfg.seed, i), i))
        .collect()
}

const DATASET_MAGIC: &[u8; 4] = b"SEDS";
pub const DATASET_VERSION: u16 = 1;

/// Serializes objects into the `SEDS` container.
///
/// Layout (little-endian): `"SEDS" | version u16 | N u32 | T u16 | R u16 |
/// L_per_user u16`, then per object `K u16 | sigma2 f64 | tag_len u16 | tag |
/// K·R·T × (re f64, im f64)` in row-major `(k, r, t)` order, then a CRC-32 of
/// every preceding byte.
pub fn encode_dataset(objects: &[ChannelObject]) -> Result<Vec<u8>> {
    let first = objects
        .first()
        .ok_or_else(|| Error::InvalidArgument("cannot encode an empty dataset".into()))?;
    let (r, t, l) = (first.rx_antennas(), first.tx_antennas(), first.layers_per_user);
    let narrow =
        |v: usize, what: &str| u16::try_from(v).map_err(|_| Error::InvalidArgument(format!("{what} {v} exceeds u16")));
    let mut w = Writer::new(DATASET_MAGIC, DATASET_VERSION);
    w.u32(u32::try_from(objects.len()).map_err(|_| Error::InvalidArgument("too many objects".into()))?);
    w.u16(narrow(t, "T")?);
    w.u16(narrow(r, "R")?);
    w.u16(narrow(l, "L_per_user")?);
    for obj in objects {
        obj.check_shape()?;
        if (obj.rx_antennas(), obj.tx_antennas(), obj.layers_per_user) != (r, t, l) {
            return Err(Error::Shape("objects disagree on R, T or L_per_user".into()));
        }
        w.u16(narrow(obj.num_users(), "K")?);
        w.f64(obj.sigma2);
        w.str(&obj.scenario_tag)?;
        for h in &obj.users {
            for i in 0..r {
                for j in 0..t {
                    let z = h[(i, j)];
                    w.f64(z.re);
                    w.f64(z.im);
                }
            }
        }
    }
    Ok(w.finish())
}

pub fn decode_dataset(bytes: &[u8]) -> Result<Vec<ChannelObject>> {
    let mut rd = Reader::open(bytes, DATASET_MAGIC, DATASET_VERSION)?;
    let n = rd.u32()? as usize;
    let t = rd.u16()? as usize;
    let r = rd.u16()? as usize;
    let l = rd.u16()? as usize;
    let mut out = Vec::with_capacity(n.min(1 << 20));
    for _ in 0..n {
        let k = rd.u16()? as usize;
        let sigma2 = rd.f64()?;
        let tag = rd.str()?;
        let mut users = Vec::with_capacity(k);
        for _ in 0..k {
            let mut h = CMatrix::zeros(r, t);
            for i in 0..r {
                for j in 0..t {
                    let re = rd.f64()?;
                    let im = rd.f64()?;
                    h[(i, j)] = Complex64::new(re, im);
                }
            }
            users.push(h);
        }
        out.push(ChannelObject::new(users, l, sigma2, tag)?);
    }
    rd.finish()?;
    Ok(out)
}

pub fn save_dataset(objects: &[ChannelObject], path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, encode_dataset(objects)?)?;
    Ok(())
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<Vec<ChannelObject>> {
    decode_dataset(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_are_valid() {
        for kind in [ScenarioKind::UrbanAnalog, ScenarioKind::RuralAnalog, ScenarioKind::Iid] {
            ScenarioConfig::preset(kind, 1).validate().unwrap();
        }
    }

    #[test]
    fn rejects_inverted_noise_range() {
        let mut cfg = ScenarioConfig::iid(0);
        cfg.noise_variance_range = (1.0, 0.1);
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
        cfg.noise_variance_range = (0.0, 0.1);
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn same_index_is_bit_identical() {
        for cfg in [
            ScenarioConfig::urban(42),
            ScenarioConfig::rural(42),
            ScenarioConfig::iid(42),
        ] {
            let a = generate_channel(&cfg, 4, 7).unwrap();
            let b = generate_channel(&cfg, 4, 7).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn different_indices_differ() {
        let cfg = ScenarioConfig::urban(1);
        let a = generate_channel(&cfg, 2, 0).unwrap();
        let b = generate_channel(&cfg, 2, 1).unwrap();
        assert_ne!(a.users[0], b.users[0]);
    }

    #[test]
    fn geometric_energy_is_normalized() {
        // E‖H_k‖² = R·T by construction; check the sample mean loosely.
        let cfg = ScenarioConfig::urban(3);
        let n = 400;
        let mean: f64 = (0..n)
            .map(|i| {
                let o = draw_candidate(&cfg, 1, i, 0).unwrap();
                o.users[0].iter().map(|z| z.norm_sqr()).sum::<f64>()
            })
            .sum::<f64>()
            / n as f64;
        let expected = (RX_ANTENNAS * TX_ANTENNAS) as f64;
        assert!((mean / expected - 1.0).abs() < 0.15, "mean energy {mean}");
    }

    #[test]
    fn sigma2_within_range() {
        let cfg = ScenarioConfig::rural(5);
        for i in 0..200 {
            let o = draw_candidate(&cfg, 1, i, 0).unwrap();
            assert!(o.sigma2 >= 1e-3 && o.sigma2 <= 1.0);
        }
    }

    #[test]
    fn user_count_parsing() {
        assert_eq!("4".parse::<UserCount>().unwrap(), UserCount::Fixed(4));
        assert_eq!("{2,4,8}".parse::<UserCount>().unwrap(), UserCount::Set(vec![2, 4, 8]));
        assert!("0".parse::<UserCount>().is_err());
        assert!("x".parse::<UserCount>().is_err());
    }

    #[test]
    fn shape_check_rejects_mixed_shapes() {
        let a = CMatrix::zeros(4, 8);
        let b = CMatrix::zeros(4, 6);
        assert!(ChannelObject::new(vec![a, b], 2, 1.0, "x").is_err());
    }
}
