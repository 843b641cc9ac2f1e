//! Pooling-system simulation: Bernoulli pooling matrices, sparse viral-load
//! signals, mis-specification (MME) injection, noisy pooled measurements and
//! the pair-differencing (centering) transform.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use ndarray::{Array1, Array2, ArrayView1};
use rand::seq::{index, SliceRandom};
use rand::Rng as _;
use rand_distr::{Distribution, Normal, Uniform};

use crate::error::{param, Error, Result};
use crate::rng::{substream, Stream};

/// Resample budget for adversarial MME injection.
pub const INJECTION_RETRIES: usize = 1000;

/// Default per-cycle replication factor of the RT-PCR noise model.
pub const DEFAULT_PCR_Q: f64 = 0.95;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MmeModel {
    /// One bit of the row flipped.
    Ssm,
    /// Two circularly adjacent bits exchanged.
    Asm,
    /// Two rows exchanged.
    Perm,
}

impl MmeModel {
    pub const ALL: [MmeModel; 3] = [MmeModel::Ssm, MmeModel::Asm, MmeModel::Perm];
}

impl fmt::Display for MmeModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MmeModel::Ssm => "SSM",
            MmeModel::Asm => "ASM",
            MmeModel::Perm => "PERM",
        })
    }
}

impl FromStr for MmeModel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "SSM" => Ok(MmeModel::Ssm),
            "ASM" => Ok(MmeModel::Asm),
            "PERM" | "PERMUTATION" => Ok(MmeModel::Perm),
            other => param(format!("unknown MME model '{other}'")),
        }
    }
}

/// Intended binary pooling design `B` (rows are pools, columns subjects).
#[derive(Debug, Clone, PartialEq)]
pub struct PoolingSystem {
    pub n: usize,
    pub p: usize,
    pub theta: f64,
    pub b: Array2<f64>,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SignalVector {
    pub beta: Array1<f64>,
    /// Sorted nonzero positions.
    pub support: Vec<usize>,
}

impl SignalVector {
    pub fn sparsity(&self) -> usize {
        self.support.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MmeRecord {
    pub model: MmeModel,
    pub row: usize,
    /// SSM: flipped column. ASM: swap position `j` (partner `(j + 1) % p`).
    /// PERM: partner row.
    pub detail: usize,
    /// `(b̃_row - b_row) · β*`.
    pub delta_tilde: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Injection {
    pub b_tilde: Array2<f64>,
    pub records: Vec<MmeRecord>,
}

impl Injection {
    pub fn rows(&self) -> Vec<usize> {
        self.records.iter().map(|r| r.row).collect()
    }

    /// Full-length MME vector `δ̃* = (B̃ - B)β*`.
    pub fn delta_tilde(&self, n: usize) -> Array1<f64> {
        let mut d = Array1::zeros(n);
        for r in &self.records {
            d[r.row] = r.delta_tilde;
        }
        d
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NoiseConfig {
    None,
    /// Additive N(0, σ̃²) with σ̃ = f_σ · mean_i |b̃_i β*|.
    Gaussian { f_sigma: f64 },
    /// Multiplicative `(1+q)^e`, `e ~ N(0, f_σ²)` in PCR cycle units.
    LognormalPcr { q: f64, f_sigma: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseKind {
    None,
    Gaussian,
    LognormalPcr,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementSet {
    pub z: Array1<f64>,
    pub noise_kind: NoiseKind,
    /// Standard deviation of the additive (or Gaussian-approximated) noise on `z`.
    pub sigma_tilde: f64,
    pub f_sigma: f64,
    pub q: f64,
}

/// Pair-differenced system `y = Aβ* + δ* + η` on `n' = ⌊n/2⌋` rows.
#[derive(Debug, Clone, PartialEq)]
pub struct CenteredSystem {
    pub y: Array1<f64>,
    pub a: Array2<f64>,
    /// Centered row `i` is `(pairing[i].0 - pairing[i].1) * h` in original rows.
    pub pairing: Vec<(usize, usize)>,
    pub theta: f64,
    pub h: f64,
    pub sigma_centered: f64,
}

impl CenteredSystem {
    pub fn n_prime(&self) -> usize {
        self.y.len()
    }

    pub fn p(&self) -> usize {
        self.a.ncols()
    }

    /// Original rows feeding the given centered indices.
    pub fn original_rows(&self, centered: &[usize]) -> Vec<usize> {
        let mut rows: Vec<usize> = centered
            .iter()
            .flat_map(|&i| [self.pairing[i].0, self.pairing[i].1])
            .collect();
        rows.sort_unstable();
        rows
    }

    /// Centered MME vector implied by an uncentered one under this pairing.
    pub fn center_vector(&self, v: ArrayView1<f64>) -> Array1<f64> {
        self.pairing
            .iter()
            .map(|&(i, k)| (v[i] - v[k]) * self.h)
            .collect()
    }

    /// Sub-system restricted to the given centered rows, in the given order.
    pub fn select_rows(&self, keep: &[usize]) -> CenteredSystem {
        CenteredSystem {
            y: keep.iter().map(|&i| self.y[i]).collect(),
            a: self.a.select(ndarray::Axis(0), keep),
            pairing: keep.iter().map(|&i| self.pairing[i]).collect(),
            theta: self.theta,
            h: self.h,
            sigma_centered: self.sigma_centered,
        }
    }
}

/// `h = 1 / (2θ(1-θ))`.
pub fn centering_scale(theta: f64) -> f64 {
    1.0 / (2.0 * theta * (1.0 - theta))
}

fn check_theta(theta: f64) -> Result<()> {
    if !(theta > 0.0 && theta < 1.0) {
        return param(format!("theta must lie in (0,1), got {theta}"));
    }
    Ok(())
}

/// i.i.d. Bernoulli(θ) 0/1 matrix with no shape restriction; the draw
/// matches [`gen_pooling`] for the same seed.
pub fn bernoulli_design(n: usize, p: usize, theta: f64, seed: u64) -> Result<Array2<f64>> {
    check_theta(theta)?;
    let mut rng = substream(seed, Stream::Matrix);
    Ok(Array2::from_shape_simple_fn((n, p), || {
        if rng.random::<f64>() < theta {
            1.0
        } else {
            0.0
        }
    }))
}

pub fn gen_pooling(n: usize, p: usize, theta: f64, seed: u64) -> Result<PoolingSystem> {
    if n < 2 {
        return param(format!("need at least 2 pools, got {n}"));
    }
    if p <= n {
        return param(format!("need p > n (compressive regime), got n={n}, p={p}"));
    }
    let b = bernoulli_design(n, p, theta, seed)?;
    Ok(PoolingSystem {
        n,
        p,
        theta,
        b,
        seed,
    })
}

pub fn gen_signal(p: usize, s: usize, low: f64, high: f64, seed: u64) -> Result<SignalVector> {
    if s > p {
        return param(format!("sparsity {s} exceeds dimension {p}"));
    }
    if !(low > 0.0 && low < high) {
        return param(format!("need 0 < low < high, got [{low}, {high}]"));
    }
    let mut rng = substream(seed, Stream::Signal);
    let mut support = index::sample(&mut rng, p, s).into_vec();
    support.sort_unstable();
    let dist = Uniform::new(low, high).map_err(|e| Error::Parameter(e.to_string()))?;
    let mut beta = Array1::zeros(p);
    let mut seen: Vec<f64> = Vec::with_capacity(s);
    for &j in &support {
        let v = loop {
            let v = dist.sample(&mut rng);
            if !seen.contains(&v) {
                break v;
            }
        };
        seen.push(v);
        beta[j] = v;
    }
    Ok(SignalVector { beta, support })
}

fn circular_partner(j: usize, p: usize) -> usize {
    (j + 1) % p
}

fn row_delta(b_tilde: ArrayView1<f64>, b: ArrayView1<f64>, beta: ArrayView1<f64>) -> f64 {
    b_tilde
        .iter()
        .zip(b.iter())
        .zip(beta.iter())
        .map(|((t, o), x)| (t - o) * x)
        .sum()
}

fn pairwise_distinct(values: &[f64]) -> bool {
    for (i, a) in values.iter().enumerate() {
        if values[i + 1..].contains(a) {
            return false;
        }
    }
    true
}

/// Injects `r` mis-specified rows into a copy of `B`.
///
/// With `adversarial` set, every MME is effective (`δ̃*_i ≠ 0`) and the
/// `δ̃*` values are pairwise distinct; SSM/ASM perturbations are restricted
/// to the support of `β*`. Whole injections are resampled until both hold,
/// up to [`INJECTION_RETRIES`] attempts.
pub fn inject_mmes(
    sys: &PoolingSystem,
    beta: &SignalVector,
    model: MmeModel,
    r: usize,
    seed: u64,
    adversarial: bool,
) -> Result<Injection> {
    let (n, p) = (sys.n, sys.p);
    if r >= n {
        return param(format!("r = {r} must be below n = {n}"));
    }
    if model == MmeModel::Perm && r % 2 == 1 {
        return param(format!("permutation errors affect rows in pairs; r = {r} is odd"));
    }
    if r == 0 {
        return Ok(Injection {
            b_tilde: sys.b.clone(),
            records: Vec::new(),
        });
    }
    if adversarial && beta.support.is_empty() {
        return Err(Error::Infeasible {
            attempts: 0,
            reason: "effective MMEs need a nonzero signal".into(),
        });
    }
    let mut rng = substream(seed, Stream::Mme);
    let bv = beta.beta.view();
    for _ in 0..INJECTION_RETRIES {
        let mut b_tilde = sys.b.clone();
        let mut records = Vec::with_capacity(r);
        let mut rows = index::sample(&mut rng, n, r).into_vec();
        match model {
            MmeModel::Ssm => {
                for &row in &rows {
                    let j = if adversarial {
                        beta.support[rng.random_range(0..beta.support.len())]
                    } else {
                        rng.random_range(0..p)
                    };
                    b_tilde[[row, j]] = 1.0 - b_tilde[[row, j]];
                    records.push((row, j));
                }
            }
            MmeModel::Asm => {
                let mut ok = true;
                for &row in &rows {
                    let b = sys.b.row(row);
                    let positions: Vec<usize> = (0..p)
                        .filter(|&j| {
                            let k = circular_partner(j, p);
                            b[j] != b[k] && (!adversarial || bv[j] != bv[k])
                        })
                        .collect();
                    if positions.is_empty() {
                        ok = false;
                        break;
                    }
                    let j = positions[rng.random_range(0..positions.len())];
                    let k = circular_partner(j, p);
                    b_tilde[[row, j]] = sys.b[[row, k]];
                    b_tilde[[row, k]] = sys.b[[row, j]];
                    records.push((row, j));
                }
                if !ok {
                    continue;
                }
            }
            MmeModel::Perm => {
                rows.shuffle(&mut rng);
                for pair in rows.chunks_exact(2) {
                    let (i1, i2) = (pair[0], pair[1]);
                    b_tilde.row_mut(i1).assign(&sys.b.row(i2));
                    b_tilde.row_mut(i2).assign(&sys.b.row(i1));
                    records.push((i1, i2));
                    records.push((i2, i1));
                }
            }
        }
        let mut records: Vec<MmeRecord> = records
            .into_iter()
            .map(|(row, detail)| MmeRecord {
                model,
                row,
                detail,
                delta_tilde: row_delta(b_tilde.row(row), sys.b.row(row), bv),
            })
            .collect();
        records.sort_by_key(|r| r.row);
        if adversarial {
            let deltas: Vec<f64> = records.iter().map(|r| r.delta_tilde).collect();
            if deltas.iter().any(|&d| d == 0.0) || !pairwise_distinct(&deltas) {
                continue;
            }
        }
        return Ok(Injection { b_tilde, records });
    }
    Err(Error::Infeasible {
        attempts: INJECTION_RETRIES,
        reason: format!("could not place {r} distinct effective {model} errors"),
    })
}

/// Rows whose MME magnitude falls below the `2(k+1)σ̃` margin.
pub fn margin_violations(records: &[MmeRecord], sigma_tilde: f64, k: f64) -> Vec<usize> {
    let margin = 2.0 * (k + 1.0) * sigma_tilde;
    records
        .iter()
        .filter(|r| r.delta_tilde.abs() < margin)
        .map(|r| r.row)
        .collect()
}

pub fn forward(
    b_tilde: &Array2<f64>,
    beta: &SignalVector,
    noise: NoiseConfig,
    seed: u64,
) -> Result<MeasurementSet> {
    let clean = b_tilde.dot(&beta.beta);
    let n = clean.len();
    let mut rng = substream(seed, Stream::Noise);
    match noise {
        NoiseConfig::None => Ok(MeasurementSet {
            z: clean,
            noise_kind: NoiseKind::None,
            sigma_tilde: 0.0,
            f_sigma: 0.0,
            q: 0.0,
        }),
        NoiseConfig::Gaussian { f_sigma } => {
            if !(f_sigma >= 0.0) {
                return param(format!("f_sigma must be nonnegative, got {f_sigma}"));
            }
            let sigma_tilde = gaussian_sigma(clean.view(), f_sigma);
            let z = if sigma_tilde > 0.0 {
                let dist = Normal::new(0.0, sigma_tilde).map_err(|e| Error::Parameter(e.to_string()))?;
                clean.mapv(|v| v + dist.sample(&mut rng))
            } else {
                clean
            };
            debug_assert_eq!(z.len(), n);
            Ok(MeasurementSet {
                z,
                noise_kind: NoiseKind::Gaussian,
                sigma_tilde,
                f_sigma,
                q: 0.0,
            })
        }
        NoiseConfig::LognormalPcr { q, f_sigma } => {
            if !(q > 0.0 && q < 1.0) {
                return param(format!("q must lie in (0,1), got {q}"));
            }
            if !(f_sigma >= 0.0) {
                return param(format!("f_sigma must be nonnegative, got {f_sigma}"));
            }
            let growth = 1.0 + q;
            let z = if f_sigma > 0.0 {
                let dist = Normal::new(0.0, f_sigma).map_err(|e| Error::Parameter(e.to_string()))?;
                clean.mapv(|v| v * growth.powf(dist.sample(&mut rng)))
            } else {
                clean
            };
            let sigma_tilde = lognormal_sigma(z.view(), q, f_sigma);
            Ok(MeasurementSet {
                z,
                noise_kind: NoiseKind::LognormalPcr,
                sigma_tilde,
                f_sigma,
                q,
            })
        }
    }
}

/// `f_σ · (1/n) Σ |b̃_i β*|`.
pub fn gaussian_sigma(clean: ArrayView1<f64>, f_sigma: f64) -> f64 {
    f_sigma * clean.iter().map(|v| v.abs()).sum::<f64>() / clean.len() as f64
}

/// Gaussian approximation of the PCR noise: `z (1+q)^e ≈ z (1 + ln(1+q) e)`,
/// with the pool-to-pool spread summarised by the RMS measurement.
pub fn lognormal_sigma(z: ArrayView1<f64>, q: f64, f_sigma: f64) -> f64 {
    let rms = (z.iter().map(|v| v * v).sum::<f64>() / z.len() as f64).sqrt();
    (1.0 + q).ln() * f_sigma * rms
}

/// Pair-differences rows `order[i]` and `order[n'+i]`; with odd `n` the
/// last entry of `order` is dropped.
pub fn center(
    z: ArrayView1<f64>,
    b: &Array2<f64>,
    theta: f64,
    row_order: Option<&[usize]>,
    sigma_tilde: f64,
) -> Result<CenteredSystem> {
    check_theta(theta)?;
    let n = b.nrows();
    if z.len() != n {
        return param(format!("z has {} entries but B has {n} rows", z.len()));
    }
    let identity: Vec<usize>;
    let order = match row_order {
        Some(o) => {
            if o.len() != n {
                return param("row order must be a permutation of all rows");
            }
            let set: HashSet<usize> = o.iter().copied().collect();
            if set.len() != n || o.iter().any(|&i| i >= n) {
                return param("row order is not a permutation");
            }
            o
        }
        None => {
            identity = (0..n).collect();
            &identity
        }
    };
    let h = centering_scale(theta);
    let np = n / 2;
    let p = b.ncols();
    let mut a = Array2::zeros((np, p));
    let mut y = Array1::zeros(np);
    let mut pairing = Vec::with_capacity(np);
    for i in 0..np {
        let (top, bottom) = (order[i], order[np + i]);
        y[i] = (z[top] - z[bottom]) * h;
        let mut row = a.row_mut(i);
        for j in 0..p {
            row[j] = (b[[top, j]] - b[[bottom, j]]) * h;
        }
        pairing.push((top, bottom));
    }
    Ok(CenteredSystem {
        y,
        a,
        pairing,
        theta,
        h,
        sigma_centered: sigma_tilde * std::f64::consts::SQRT_2 * h,
    })
}

/// One line per row of `0`/`1` characters.
pub fn write_binary_matrix(b: &Array2<f64>) -> String {
    let mut out = String::with_capacity(b.len() + b.nrows());
    for row in b.rows() {
        out.extend(row.iter().map(|&v| if v != 0.0 { '1' } else { '0' }));
        out.push('\n');
    }
    out
}

pub fn parse_binary_matrix(text: &str) -> Result<Array2<f64>> {
    let rows: Vec<&str> = text.lines().filter(|l| !l.trim().is_empty()).collect();
    let p = rows.first().map(|r| r.trim().len()).unwrap_or(0);
    let mut b = Array2::zeros((rows.len(), p));
    for (i, line) in rows.iter().enumerate() {
        let line = line.trim();
        if line.len() != p {
            return param(format!("row {i} has {} columns, expected {p}", line.len()));
        }
        for (j, c) in line.chars().enumerate() {
            b[[i, j]] = match c {
                '0' => 0.0,
                '1' => 1.0,
                other => return param(format!("invalid character '{other}' in row {i}")),
            };
        }
    }
    Ok(b)
}

/// CSV `model,row,detail,delta_tilde` with a header line.
pub fn write_records(records: &[MmeRecord]) -> String {
    let mut out = String::from("model,row,detail,delta_tilde\n");
    for r in records {
        out.push_str(&format!("{},{},{},{}\n", r.model, r.row, r.detail, crate::numfmt::full(r.delta_tilde)));
    }
    out
}

/// Parses `model,row,detail[,delta_tilde]` lines; a missing `delta_tilde`
/// is left at zero.
pub fn parse_records(text: &str) -> Result<Vec<MmeRecord>> {
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || (lineno == 0 && line.starts_with("model")) {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if !(3..=4).contains(&fields.len()) {
            return param(format!("line {}: expected 3 or 4 fields", lineno + 1));
        }
        let parse = |s: &str| {
            s.trim()
                .parse::<usize>()
                .map_err(|e| Error::Parameter(format!("line {}: {e}", lineno + 1)))
        };
        out.push(MmeRecord {
            model: fields[0].parse()?,
            row: parse(fields[1])?,
            detail: parse(fields[2])?,
            delta_tilde: match fields.get(3) {
                Some(v) => v
                    .trim()
                    .parse()
                    .map_err(|e| Error::Parameter(format!("line {}: {e}", lineno + 1)))?,
                None => 0.0,
            },
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{arr1, arr2};

    fn signal(beta: Array1<f64>) -> SignalVector {
        let support = beta
            .iter()
            .enumerate()
            .filter(|(_, v)| **v != 0.0)
            .map(|(j, _)| j)
            .collect();
        SignalVector { beta, support }
    }

    #[test]
    fn pooling_rejects_bad_parameters() {
        assert!(gen_pooling(1, 3, 0.5, 0).is_err());
        assert!(gen_pooling(4, 4, 0.5, 0).is_err());
        assert!(gen_pooling(4, 8, 0.0, 0).is_err());
        assert!(gen_pooling(4, 8, 1.0, 0).is_err());
    }

    #[test]
    fn pooling_near_one_is_all_ones() {
        let sys = gen_pooling(2, 3, 1.0 - 1e-15, 3).unwrap();
        assert!(sys.b.iter().all(|&v| v == 1.0));
    }

    #[test]
    fn pooling_density_and_determinism() {
        let a = gen_pooling(80, 200, 0.5, 7).unwrap();
        let b = gen_pooling(80, 200, 0.5, 7).unwrap();
        assert_eq!(a, b);
        let ones = a.b.iter().filter(|&&v| v == 1.0).count();
        let zeros = a.b.iter().filter(|&&v| v == 0.0).count();
        assert_eq!(ones + zeros, 80 * 200);
        let mean = ones as f64 / (80.0 * 200.0);
        assert!((0.45..=0.55).contains(&mean), "mean {mean}");
    }

    #[test]
    fn signal_ranges_and_distinctness() {
        assert_eq!(gen_signal(4, 0, 100.0, 1000.0, 1).unwrap().beta, Array1::zeros(4));
        assert!(gen_signal(4, 5, 100.0, 1000.0, 1).is_err());
        let sig = gen_signal(200, 10, 100.0, 1000.0, 11).unwrap();
        let nz: Vec<f64> = sig.beta.iter().copied().filter(|v| *v != 0.0).collect();
        assert_eq!(nz.len(), 10);
        assert_eq!(sig.support.len(), 10);
        assert!(nz.iter().all(|v| (100.0..=1000.0).contains(v)));
        assert!(pairwise_distinct(&nz));
    }

    #[test]
    fn ssm_flip_example() {
        let b = arr2(&[[1.0, 0.0, 0.0, 0.0], [0.0, 0.0, 1.0, 1.0]]);
        let beta = arr1(&[100.0, 200.0, 0.0, 0.0]);
        let mut bt = b.clone();
        bt[[0, 1]] = 1.0;
        assert_eq!(bt.row(0).to_vec(), vec![1.0, 1.0, 0.0, 0.0]);
        assert_eq!(row_delta(bt.row(0), b.row(0), beta.view()), 200.0);
    }

    #[test]
    fn asm_swap_example() {
        let b = arr1(&[1.0, 0.0, 0.0, 1.0]);
        let beta = arr1(&[10.0, 30.0, 0.0, 0.0]);
        let mut bt = b.clone();
        bt.swap(0, 1);
        assert_eq!(bt.to_vec(), vec![0.0, 1.0, 0.0, 1.0]);
        assert_eq!(row_delta(bt.view(), b.view(), beta.view()), beta[1] - beta[0]);
    }

    #[test]
    fn zero_errors_leave_matrix_untouched() {
        let sys = gen_pooling(10, 20, 0.5, 1).unwrap();
        let sig = gen_signal(20, 3, 100.0, 1000.0, 1).unwrap();
        let inj = inject_mmes(&sys, &sig, MmeModel::Ssm, 0, 5, true).unwrap();
        assert_eq!(inj.b_tilde, sys.b);
        assert!(inj.records.is_empty());
    }

    #[test]
    fn adversarial_injection_properties() {
        let sys = gen_pooling(80, 200, 0.5, 2).unwrap();
        let sig = gen_signal(200, 10, 100.0, 1000.0, 2).unwrap();
        for model in MmeModel::ALL {
            let inj = inject_mmes(&sys, &sig, model, 6, 9, true).unwrap();
            assert_eq!(inj.records.len(), 6);
            let deltas: Vec<f64> = inj.records.iter().map(|r| r.delta_tilde).collect();
            assert!(deltas.iter().all(|&d| d != 0.0));
            assert!(pairwise_distinct(&deltas));
            let changed: Vec<usize> = (0..80)
                .filter(|&i| inj.b_tilde.row(i) != sys.b.row(i))
                .collect();
            assert_eq!(changed, inj.rows());
            for rec in &inj.records {
                let diff: Vec<usize> = (0..200)
                    .filter(|&j| inj.b_tilde[[rec.row, j]] != sys.b[[rec.row, j]])
                    .collect();
                match model {
                    MmeModel::Ssm => assert_eq!(diff, vec![rec.detail]),
                    MmeModel::Asm => {
                        let k = (rec.detail + 1) % 200;
                        let mut expect = vec![rec.detail, k];
                        expect.sort_unstable();
                        assert_eq!(diff, expect);
                    }
                    MmeModel::Perm => {
                        assert_eq!(inj.b_tilde.row(rec.row), sys.b.row(rec.detail));
                    }
                }
                let recomputed = row_delta(inj.b_tilde.row(rec.row), sys.b.row(rec.row), sig.beta.view());
                assert_eq!(recomputed, rec.delta_tilde);
            }
        }
    }

    #[test]
    fn perm_preserves_row_multiset() {
        let sys = gen_pooling(20, 40, 0.5, 4).unwrap();
        let sig = gen_signal(40, 4, 100.0, 1000.0, 4).unwrap();
        let inj = inject_mmes(&sys, &sig, MmeModel::Perm, 6, 1, true).unwrap();
        let mut before: Vec<String> = sys.b.rows().into_iter().map(|r| format!("{r}")).collect();
        let mut after: Vec<String> = inj.b_tilde.rows().into_iter().map(|r| format!("{r}")).collect();
        before.sort();
        after.sort();
        assert_eq!(before, after);
        assert!(inject_mmes(&sys, &sig, MmeModel::Perm, 3, 1, true).is_err());
    }

    #[test]
    fn infeasible_injection_reports_budget() {
        // one nonzero coordinate: at most two distinct SSM values (+β, -β)
        let sys = gen_pooling(10, 20, 0.5, 5).unwrap();
        let mut beta = Array1::zeros(20);
        beta[3] = 500.0;
        let sig = signal(beta);
        match inject_mmes(&sys, &sig, MmeModel::Ssm, 3, 1, true) {
            Err(Error::Infeasible { attempts, .. }) => assert_eq!(attempts, INJECTION_RETRIES),
            other => panic!("expected infeasible, got {other:?}"),
        }
    }

    #[test]
    fn forward_noise_models() {
        let b = arr2(&[[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [1.0, 1.0, 0.0]]);
        let sig = signal(arr1(&[100.0, 0.0, 0.0]));
        let m = forward(&b, &sig, NoiseConfig::None, 0).unwrap();
        assert_eq!(m.z[0], 100.0);

        let clean = arr1(&[1000.0, -1000.0, 1000.0, 1000.0]);
        assert!((gaussian_sigma(clean.view(), 0.01) - 10.0).abs() < 1e-12);

        let g = forward(&b, &sig, NoiseConfig::Gaussian { f_sigma: 0.01 }, 1).unwrap();
        let expect = 0.01 * (100.0 + 0.0 + 100.0) / 3.0;
        assert!((g.sigma_tilde - expect).abs() <= 1e-12 * expect);

        let l = forward(&b, &sig, NoiseConfig::LognormalPcr { q: 0.95, f_sigma: 0.0 }, 1).unwrap();
        assert_eq!(l.z, b.dot(&sig.beta));
        let l = forward(&b, &sig, NoiseConfig::LognormalPcr { q: 0.95, f_sigma: 0.05 }, 1).unwrap();
        assert!(l.z[0] > 0.0 && l.z[2] > 0.0);
        assert_eq!(l.z[1], 0.0);

        assert!(forward(&b, &sig, NoiseConfig::Gaussian { f_sigma: -1.0 }, 1).is_err());
        assert!(forward(&b, &sig, NoiseConfig::LognormalPcr { q: 1.5, f_sigma: 0.1 }, 1).is_err());
    }

    #[test]
    fn centering_example() {
        let b = arr2(&[
            [1.0, 1.0, 0.0],
            [0.0, 1.0, 1.0],
            [1.0, 0.0, 0.0],
            [0.0, 1.0, 0.0],
        ]);
        let z = arr1(&[5.0, 7.0, 2.0, 3.0]);
        let c = center(z.view(), &b, 0.5, None, 1.0).unwrap();
        assert_eq!(c.y.to_vec(), vec![6.0, 8.0]);
        assert_eq!(c.a.row(0).to_vec(), vec![0.0, 2.0, 0.0]);
        assert_eq!(c.a.row(1).to_vec(), vec![0.0, 0.0, 2.0]);
        assert_eq!(c.pairing, vec![(0, 2), (1, 3)]);
        // σ_c² = σ̃² · 2 / (2θ(1-θ))²
        assert!((c.sigma_centered.powi(2) - 2.0 * 4.0).abs() < 1e-12);
    }

    #[test]
    fn centering_cancels_equal_pairs() {
        let b = arr2(&[[1.0, 0.0, 1.0], [1.0, 0.0, 1.0]]);
        let z = arr1(&[4.0, 4.0]);
        let c = center(z.view(), &b, 0.3, None, 0.0).unwrap();
        assert_eq!(c.y[0], 0.0);
        assert!(c.a.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn centering_drops_last_row_when_odd() {
        let b = arr2(&[[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]]);
        let z = arr1(&[1.0, 2.0, 3.0]);
        let c = center(z.view(), &b, 0.5, Some(&[2, 0, 1]), 0.0).unwrap();
        assert_eq!(c.pairing, vec![(2, 0)]);
        assert!(center(z.view(), &b, 0.5, Some(&[0, 0, 1]), 0.0).is_err());
        assert!(center(z.view(), &b, 0.5, Some(&[0, 1]), 0.0).is_err());
    }

    #[test]
    fn equal_mmes_cancel_under_centering() {
        // rows 0 and 2 get the same SSM error value and are paired together
        let b = arr2(&[
            [1.0, 0.0, 0.0, 1.0],
            [0.0, 1.0, 1.0, 0.0],
            [0.0, 0.0, 1.0, 1.0],
            [1.0, 1.0, 0.0, 0.0],
        ]);
        let beta = arr1(&[0.0, 300.0, 0.0, 0.0]);
        let mut bt = b.clone();
        bt[[0, 1]] = 1.0;
        bt[[2, 1]] = 1.0;
        let dt = &bt.dot(&beta) - &b.dot(&beta);
        assert_eq!(dt[0], 300.0);
        assert_eq!(dt[2], 300.0);
        let z = bt.dot(&beta);
        let c = center(z.view(), &b, 0.5, None, 0.0).unwrap();
        let delta_c = c.center_vector(dt.view());
        assert_eq!(delta_c[0], 0.0);
        let resid = &c.y - &c.a.dot(&beta);
        assert_eq!(resid[0], 0.0);
    }

    #[test]
    fn serialization_round_trip() {
        let sys = gen_pooling(6, 9, 0.4, 8).unwrap();
        let text = write_binary_matrix(&sys.b);
        assert_eq!(text.lines().count(), 6);
        assert_eq!(parse_binary_matrix(&text).unwrap(), sys.b);
        assert!(parse_binary_matrix("010\n0a1\n").is_err());

        let sys = gen_pooling(20, 40, 0.5, 4).unwrap();
        let sig = gen_signal(40, 4, 100.0, 1000.0, 4).unwrap();
        let inj = inject_mmes(&sys, &sig, MmeModel::Asm, 3, 1, true).unwrap();
        let csv = write_records(&inj.records);
        assert_eq!(parse_records(&csv).unwrap(), inj.records);
        let short = parse_records("model,row,detail\nPERM,3,7\n").unwrap();
        assert_eq!((short[0].row, short[0].detail, short[0].delta_tilde), (3, 7, 0.0));
    }

    #[test]
    fn a1_margin_report() {
        let recs = vec![
            MmeRecord { model: MmeModel::Ssm, row: 1, detail: 0, delta_tilde: 50.0 },
            MmeRecord { model: MmeModel::Ssm, row: 4, detail: 0, delta_tilde: -500.0 },
        ];
        assert_eq!(margin_violations(&recs, 10.0, 3.0), vec![1]);
        assert!(margin_violations(&recs, 0.0, 3.0).is_empty());
    }
}
