//! Random channel realizations: user placement, log-normal shadowed path loss
//! and i.i.d. Rayleigh small-scale fading, combined as `G = H D^{1/2}`.
//!
//! Every sampler is a pure function of its inputs and a seed. [`build_channel`]
//! derives one sub-seed per random stream from the master seed, so the geometry,
//! shadowing and fading draws never share a generator.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Cell geometry and large-scale propagation parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeometryConfig {
    pub min_distance_m: f64,
    pub max_distance_m: f64,
    /// Path-loss exponent.
    pub path_loss_exponent: f64,
    /// Standard deviation of the shadowing in dB.
    pub shadow_std_db: f64,
    /// Constant covering carrier frequency and antenna gain.
    pub carrier_factor: f64,
}

impl Default for GeometryConfig {
    fn default() -> Self {
        Self {
            min_distance_m: 35.0,
            max_distance_m: 250.0,
            path_loss_exponent: 3.8,
            shadow_std_db: 10.0,
            carrier_factor: 1.0,
        }
    }
}

impl GeometryConfig {
    /// Checks the parameter ranges. A degenerate annulus (`min == max`) is
    /// accepted and places every user at the same distance.
    pub fn validate(&self) -> Result<()> {
        if !(self.min_distance_m > 0.0 && self.min_distance_m.is_finite()) {
            return Err(Error::invalid("min_distance_m", "must be positive"));
        }
        if !(self.max_distance_m >= self.min_distance_m && self.max_distance_m.is_finite()) {
            return Err(Error::invalid(
                "max_distance_m",
                "must be finite and not below min_distance_m",
            ));
        }
        if !(self.path_loss_exponent > 0.0) {
            return Err(Error::invalid("path_loss_exponent", "must be positive"));
        }
        if !(self.shadow_std_db >= 0.0 && self.shadow_std_db.is_finite()) {
            return Err(Error::invalid("shadow_std_db", "must be nonnegative"));
        }
        if !(self.carrier_factor > 0.0) {
            return Err(Error::invalid("carrier_factor", "must be positive"));
        }
        Ok(())
    }
}

/// Derives an independent stream seed from a master seed and a label.
pub fn sub_seed(master: u64, label: &str) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(master.to_le_bytes());
    hasher.update(label.as_bytes());
    let digest = hasher.finalize();
    let mut bytes = [0u8; 8];
    bytes.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(bytes)
}

fn rng_from(seed: u64) -> ChaCha20Rng {
    ChaCha20Rng::seed_from_u64(seed)
}

/// Draws user distances uniformly over `[min_distance_m, max_distance_m]`.
///
/// Distances are drawn in user order from a single stream, so the first `k`
/// users are the same for any `num_users >= k`.
pub fn sample_geometry(geom: &GeometryConfig, num_users: usize, rng_seed: u64) -> Result<Vec<f64>> {
    geom.validate()?;
    if num_users == 0 {
        return Err(Error::invalid("num_users", "must be at least 1"));
    }
    let mut rng = rng_from(rng_seed);
    let span = geom.max_distance_m - geom.min_distance_m;
    Ok((0..num_users)
        .map(|_| geom.min_distance_m + span * rng.random::<f64>())
        .collect())
}

/// Large-scale gains `beta_k = carrier_factor * 10^(x_k/10) / d_k^exponent`
/// with `x_k ~ N(0, shadow_std_db^2)` drawn independently per user.
pub fn large_scale_gain(distances: &[f64], geom: &GeometryConfig, rng_seed: u64) -> Result<Vec<f64>> {
    geom.validate()?;
    if let Some(bad) = distances.iter().position(|&d| !(d > 0.0 && d.is_finite())) {
        return Err(Error::invalid(
            "distances",
            format!("distance of user {bad} must be positive"),
        ));
    }
    let normal = Normal::new(0.0, geom.shadow_std_db)
        .map_err(|e| Error::invalid("shadow_std_db", e.to_string()))?;
    let mut rng = rng_from(rng_seed);
    Ok(distances
        .iter()
        .map(|&d| {
            let shadow_db: f64 = normal.sample(&mut rng);
            geom.carrier_factor * 10f64.powf(shadow_db / 10.0) / d.powf(geom.path_loss_exponent)
        })
        .collect())
}

/// Dense complex matrix stored column by column.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexMatrix {
    rows: usize,
    cols: usize,
    data: Vec<Complex64>,
}

impl ComplexMatrix {
    /// Builds a matrix from its columns; all columns must have the same length.
    pub fn from_columns(columns: Vec<Vec<Complex64>>) -> Result<Self> {
        let cols = columns.len();
        let rows = columns.first().map_or(0, Vec::len);
        if cols == 0 || rows == 0 {
            return Err(Error::invalid("small_scale", "matrix must be non-empty"));
        }
        if let Some(bad) = columns.iter().find(|c| c.len() != rows) {
            return Err(Error::DimensionMismatch {
                what: "rows per column",
                expected: rows,
                actual: bad.len(),
            });
        }
        Ok(Self {
            rows,
            cols,
            data: columns.into_iter().flatten().collect(),
        })
    }

    /// Builds a matrix from real-valued columns.
    pub fn from_real_columns(columns: &[Vec<f64>]) -> Result<Self> {
        Self::from_columns(
            columns
                .iter()
                .map(|c| c.iter().map(|&x| Complex64::new(x, 0.0)).collect())
                .collect(),
        )
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn column(&self, k: usize) -> &[Complex64] {
        &self.data[k * self.rows..(k + 1) * self.rows]
    }

    pub fn get(&self, row: usize, col: usize) -> Complex64 {
        self.data[col * self.rows + row]
    }

    /// Squared L2 norm of column `k`.
    pub fn column_norm_sqr(&self, k: usize) -> f64 {
        self.column(k).iter().map(Complex64::norm_sqr).sum()
    }

    /// `h_a^H h_b` for columns `a` and `b`.
    pub fn column_inner(&self, a: usize, b: usize) -> Complex64 {
        self.column(a)
            .iter()
            .zip(self.column(b))
            .map(|(x, y)| x.conj() * y)
            .sum()
    }
}

// JSON form: one array per row, each entry an `[re, im]` pair.
impl Serialize for ComplexMatrix {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let rows: Vec<Vec<[f64; 2]>> = (0..self.rows)
            .map(|r| {
                (0..self.cols)
                    .map(|c| {
                        let z = self.get(r, c);
                        [z.re, z.im]
                    })
                    .collect()
            })
            .collect();
        rows.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for ComplexMatrix {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let rows = Vec::<Vec<[f64; 2]>>::deserialize(deserializer)?;
        let m = rows.len();
        let k = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != k) {
            return Err(serde::de::Error::custom("ragged small_scale matrix"));
        }
        let columns = (0..k)
            .map(|c| rows.iter().map(|r| Complex64::new(r[c][0], r[c][1])).collect())
            .collect();
        let out = ComplexMatrix::from_columns(columns).map_err(serde::de::Error::custom)?;
        debug_assert_eq!(out.rows, m);
        Ok(out)
    }
}

/// Draws an `M x K` matrix of i.i.d. unit-variance circularly-symmetric complex
/// Gaussian entries, column by column.
pub fn sample_small_scale(num_antennas: usize, num_users: usize, rng_seed: u64) -> Result<ComplexMatrix> {
    if num_antennas == 0 {
        return Err(Error::invalid("num_antennas", "must be at least 1"));
    }
    if num_users == 0 {
        return Err(Error::invalid("num_users", "must be at least 1"));
    }
    let mut rng = rng_from(rng_seed);
    let scale = std::f64::consts::FRAC_1_SQRT_2;
    let columns = (0..num_users)
        .map(|_| {
            (0..num_antennas)
                .map(|_| {
                    let re: f64 = StandardNormal.sample(&mut rng);
                    let im: f64 = StandardNormal.sample(&mut rng);
                    Complex64::new(re * scale, im * scale)
                })
                .collect()
        })
        .collect();
    ComplexMatrix::from_columns(columns)
}

/// One fading realization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelState {
    pub small_scale: ComplexMatrix,
    pub large_scale: Vec<f64>,
    pub distances: Vec<f64>,
    /// `beta_k * |h_k|^2`.
    pub composite_gain: Vec<f64>,
}

impl ChannelState {
    /// Assembles a channel from its parts and fills in the composite gains.
    pub fn from_parts(small_scale: ComplexMatrix, large_scale: Vec<f64>, distances: Vec<f64>) -> Result<Self> {
        let k = small_scale.cols();
        for (what, len) in [("large-scale gains", large_scale.len()), ("distances", distances.len())] {
            if len != k {
                return Err(Error::DimensionMismatch {
                    what,
                    expected: k,
                    actual: len,
                });
            }
        }
        if let Some(bad) = large_scale.iter().position(|&b| !(b > 0.0 && b.is_finite())) {
            return Err(Error::invalid(
                "large_scale",
                format!("gain of user {bad} must be positive"),
            ));
        }
        let composite_gain: Vec<f64> = (0..k)
            .map(|u| large_scale[u] * small_scale.column_norm_sqr(u))
            .collect();
        if let Some(user) = composite_gain.iter().position(|&g| !(g > 0.0)) {
            return Err(Error::ZeroGain { user });
        }
        Ok(Self {
            small_scale,
            large_scale,
            distances,
            composite_gain,
        })
    }

    pub fn num_users(&self) -> usize {
        self.large_scale.len()
    }

    pub fn num_antennas(&self) -> usize {
        self.small_scale.rows()
    }

    /// `|h_k|^2`.
    pub fn small_scale_norm_sqr(&self, k: usize) -> f64 {
        self.small_scale.column_norm_sqr(k)
    }

    /// The channel seen by `users` alone, in the given order.
    pub fn subset(&self, users: &[usize]) -> Result<Self> {
        if let Some(&bad) = users.iter().find(|&&u| u >= self.num_users()) {
            return Err(Error::invalid("users", format!("index {bad} out of range")));
        }
        let columns = users.iter().map(|&u| self.small_scale.column(u).to_vec()).collect();
        Self::from_parts(
            ComplexMatrix::from_columns(columns)?,
            users.iter().map(|&u| self.large_scale[u]).collect(),
            users.iter().map(|&u| self.distances[u]).collect(),
        )
    }
}

/// Composes the three samplers into one channel realization.
pub fn build_channel(geom: &GeometryConfig, num_antennas: usize, num_users: usize, rng_seed: u64) -> Result<ChannelState> {
    let distances = sample_geometry(geom, num_users, sub_seed(rng_seed, "geometry"))?;
    let large_scale = large_scale_gain(&distances, geom, sub_seed(rng_seed, "shadow"))?;
    let small_scale = sample_small_scale(num_antennas, num_users, sub_seed(rng_seed, "fading"))?;
    ChannelState::from_parts(small_scale, large_scale, distances)
}
