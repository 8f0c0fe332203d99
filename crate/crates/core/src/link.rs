//! Per-user SINR, rates and energy efficiency for a power vector on a channel.
//!
//! Two SINR forms are provided: [`exact_sinr`] evaluates the MRT expression on
//! the realized channel vectors, [`asymptotic_sinr`] replaces signal and
//! interference by their expectations (`M p_k beta_k` over
//! `beta_k sum_{l != k} p_l + sigma^2`). Rates use the SNR gap; the
//! lower-bound rate used by the optimizer drops both the gap and the `1 +`.

use serde::{Deserialize, Serialize};

use crate::channel::ChannelState;
use crate::error::{Error, Result};

/// Returns the SNR gap `max(1, -(2/3) ln(5 P_e))` for a target bit error rate.
pub fn snr_gap_from_ber(target_ber: f64) -> Result<f64> {
    if !(target_ber > 0.0 && target_ber <= 0.2) {
        return Err(Error::invalid("target_ber", "must lie in (0, 0.2]"));
    }
    Ok((-(2.0 / 3.0) * (5.0 * target_ber).ln()).max(1.0))
}

/// Link-level constants shared by every user.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkParams {
    pub bandwidth_hz: f64,
    pub noise_psd_w_per_hz: f64,
    /// `N_0 B`.
    pub noise_power_w: f64,
    pub circuit_power_per_antenna_w: f64,
    pub num_antennas: usize,
    pub target_ber: f64,
    pub snr_gap: f64,
}

impl LinkParams {
    pub fn new(
        bandwidth_hz: f64,
        noise_psd_w_per_hz: f64,
        circuit_power_per_antenna_w: f64,
        num_antennas: usize,
        target_ber: f64,
    ) -> Result<Self> {
        if !(bandwidth_hz > 0.0 && bandwidth_hz.is_finite()) {
            return Err(Error::invalid("bandwidth_hz", "must be positive"));
        }
        if !(noise_psd_w_per_hz > 0.0 && noise_psd_w_per_hz.is_finite()) {
            return Err(Error::invalid("noise_psd_w_per_hz", "must be positive"));
        }
        if !(circuit_power_per_antenna_w >= 0.0 && circuit_power_per_antenna_w.is_finite()) {
            return Err(Error::invalid("circuit_power_per_antenna_w", "must be nonnegative"));
        }
        if num_antennas == 0 {
            return Err(Error::invalid("num_antennas", "must be at least 1"));
        }
        let snr_gap = snr_gap_from_ber(target_ber)?;
        Ok(Self {
            bandwidth_hz,
            noise_psd_w_per_hz,
            noise_power_w: noise_psd_w_per_hz * bandwidth_hz,
            circuit_power_per_antenna_w,
            num_antennas,
            target_ber,
            snr_gap,
        })
    }

    /// `M * P_c,m`.
    pub fn total_circuit_power_w(&self) -> f64 {
        self.num_antennas as f64 * self.circuit_power_per_antenna_w
    }

    /// Same link with a different circuit power per antenna.
    pub fn with_circuit_power_per_antenna(mut self, watts: f64) -> Self {
        self.circuit_power_per_antenna_w = watts;
        self
    }
}

/// Transmit powers, one per user.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerAllocation {
    pub powers_w: Vec<f64>,
    pub total_w: f64,
}

impl PowerAllocation {
    pub fn new(powers_w: Vec<f64>) -> Result<Self> {
        if let Some(bad) = powers_w.iter().position(|&p| !(p >= 0.0 && p.is_finite())) {
            return Err(Error::invalid(
                "powers_w",
                format!("power of user {bad} must be finite and nonnegative"),
            ));
        }
        let total_w = powers_w.iter().sum();
        Ok(Self { powers_w, total_w })
    }

    /// `total_w / K` for every user.
    pub fn equal_split(num_users: usize, total_w: f64) -> Result<Self> {
        Self::new(vec![total_w / num_users as f64; num_users])
    }

    pub fn len(&self) -> usize {
        self.powers_w.len()
    }

    pub fn is_empty(&self) -> bool {
        self.powers_w.is_empty()
    }
}

fn check_dims(alloc: &PowerAllocation, channel: &ChannelState, params: &LinkParams) -> Result<()> {
    if alloc.len() != channel.num_users() {
        return Err(Error::DimensionMismatch {
            what: "powers",
            expected: channel.num_users(),
            actual: alloc.len(),
        });
    }
    if params.num_antennas != channel.num_antennas() {
        return Err(Error::DimensionMismatch {
            what: "antennas",
            expected: channel.num_antennas(),
            actual: params.num_antennas,
        });
    }
    Ok(())
}

fn check_user(channel: &ChannelState, user: usize) -> Result<()> {
    if user >= channel.num_users() {
        return Err(Error::DimensionMismatch {
            what: "user index bound",
            expected: channel.num_users(),
            actual: user,
        });
    }
    Ok(())
}

/// SINR of `user` evaluated on the realized channel vectors with MRT
/// precoding: each interfering stream `l` enters with amplitude `sqrt(p_l beta_k)`
/// along `h_l / |h_l|`, summed coherently and then squared.
pub fn exact_sinr(alloc: &PowerAllocation, channel: &ChannelState, params: &LinkParams, user: usize) -> Result<f64> {
    check_dims(alloc, channel, params)?;
    check_user(channel, user)?;
    let p = &alloc.powers_w;
    let beta = channel.large_scale[user];
    let signal = p[user] * beta * channel.small_scale_norm_sqr(user);
    if signal == 0.0 {
        return Ok(0.0);
    }
    let mut coherent = num_complex::Complex64::new(0.0, 0.0);
    for l in (0..channel.num_users()).filter(|&l| l != user) {
        let norm = channel.small_scale_norm_sqr(l).sqrt();
        coherent += channel.small_scale.column_inner(user, l) * ((p[l] * beta).sqrt() / norm);
    }
    Ok(signal / (coherent.norm_sqr() + params.noise_power_w))
}

/// Large-array SINR `p_k beta_k M / (beta_k sum_{l != k} p_l + sigma^2)`.
pub fn asymptotic_sinr(alloc: &PowerAllocation, channel: &ChannelState, params: &LinkParams, user: usize) -> Result<f64> {
    check_dims(alloc, channel, params)?;
    check_user(channel, user)?;
    let beta = channel.large_scale[user];
    let others = alloc.total_w - alloc.powers_w[user];
    Ok(alloc.powers_w[user] * beta * params.num_antennas as f64
        / (beta * others.max(0.0) + params.noise_power_w))
}

/// `B log2(1 + sinr / mu)` in bit/s.
pub fn user_rate(sinr: f64, params: &LinkParams) -> f64 {
    debug_assert!(sinr >= 0.0);
    params.bandwidth_hz * (sinr / params.snr_gap).ln_1p() / std::f64::consts::LN_2
}

/// Sum of [`user_rate`] over users, using the asymptotic SINR.
pub fn sum_rate(alloc: &PowerAllocation, channel: &ChannelState, params: &LinkParams) -> Result<f64> {
    check_dims(alloc, channel, params)?;
    (0..channel.num_users())
        .map(|k| asymptotic_sinr(alloc, channel, params, k).map(|s| user_rate(s, params)))
        .sum()
}

/// `B log2(M beta_k p_k / (beta_k sum_{j != k} p_j + sigma^2))`. Negative when
/// the argument is below one; undefined for `p_k = 0`.
pub fn lower_bound_rate(alloc: &PowerAllocation, channel: &ChannelState, params: &LinkParams, user: usize) -> Result<f64> {
    check_dims(alloc, channel, params)?;
    check_user(channel, user)?;
    if alloc.powers_w[user] <= 0.0 {
        return Err(Error::ZeroPower { user });
    }
    let sinr = asymptotic_sinr(alloc, channel, params, user)?;
    Ok(params.bandwidth_hz * sinr.log2())
}

/// Sum of [`lower_bound_rate`] over users.
pub fn lower_bound_sum_rate(alloc: &PowerAllocation, channel: &ChannelState, params: &LinkParams) -> Result<f64> {
    (0..channel.num_users())
        .map(|k| lower_bound_rate(alloc, channel, params, k))
        .sum()
}

fn consumed_power(alloc: &PowerAllocation, params: &LinkParams) -> Result<f64> {
    let denom = alloc.total_w + params.total_circuit_power_w();
    if denom <= 0.0 {
        return Err(Error::ZeroDenominator);
    }
    Ok(denom)
}

/// Sum rate over consumed power (transmit plus `M * P_c,m`), in bit/J.
pub fn energy_efficiency(alloc: &PowerAllocation, channel: &ChannelState, params: &LinkParams) -> Result<f64> {
    check_dims(alloc, channel, params)?;
    let denom = consumed_power(alloc, params)?;
    Ok(sum_rate(alloc, channel, params)? / denom)
}

/// Energy efficiency with lower-bound rates; the quantity the optimizer maximizes.
pub fn lower_bound_energy_efficiency(alloc: &PowerAllocation, channel: &ChannelState, params: &LinkParams) -> Result<f64> {
    check_dims(alloc, channel, params)?;
    let denom = consumed_power(alloc, params)?;
    Ok(lower_bound_sum_rate(alloc, channel, params)? / denom)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{build_channel, ComplexMatrix, GeometryConfig};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    /// Channel with real columns; `large_scale` given directly.
    fn channel(columns: &[Vec<f64>], beta: &[f64]) -> ChannelState {
        ChannelState::from_parts(
            ComplexMatrix::from_real_columns(columns).unwrap(),
            beta.to_vec(),
            vec![1.0; beta.len()],
        )
        .unwrap()
    }

    /// Unit-norm-per-entry columns, so `|h_k|^2 = m`.
    fn flat_channel(m: usize, beta: &[f64]) -> ChannelState {
        let cols: Vec<Vec<f64>> = (0..beta.len()).map(|_| vec![1.0; m]).collect();
        channel(&cols, beta)
    }

    fn params(bandwidth: f64, noise_power: f64, pcm: f64, m: usize, ber: f64) -> LinkParams {
        LinkParams::new(bandwidth, noise_power / bandwidth, pcm, m, ber).unwrap()
    }

    fn alloc(p: &[f64]) -> PowerAllocation {
        PowerAllocation::new(p.to_vec()).unwrap()
    }

    #[test]
    fn snr_gap_values() {
        assert_eq!(snr_gap_from_ber(0.2).unwrap(), 1.0);
        assert!((snr_gap_from_ber(1e-3).unwrap() - 3.5322).abs() < 1e-3);
        assert!((snr_gap_from_ber(1e-5).unwrap() - 6.6031).abs() < 1e-3);
        assert!(snr_gap_from_ber(0.0).is_err());
        assert!(snr_gap_from_ber(0.3).is_err());
    }

    #[test]
    fn noise_power_is_psd_times_bandwidth() {
        let p = LinkParams::new(120e3, 1e-20, 0.0, 128, 1e-3).unwrap();
        assert_relative_eq!(p.noise_power_w, 1.2e-15, max_relative = 1e-12);
    }

    #[test]
    fn exact_sinr_single_user() {
        // |h|^2 = 4 via h = (2)
        let ch = channel(&[vec![2.0]], &[1.0]);
        let lp = params(1.0, 2.0, 0.0, 1, 0.2);
        assert_relative_eq!(exact_sinr(&alloc(&[1.0]), &ch, &lp, 0).unwrap(), 2.0);
    }

    #[test]
    fn exact_sinr_zero_power_and_dims() {
        let ch = flat_channel(4, &[1.0, 1.0]);
        let lp = params(1.0, 1.0, 0.0, 4, 0.2);
        assert_eq!(exact_sinr(&alloc(&[0.0, 1.0]), &ch, &lp, 0).unwrap(), 0.0);
        assert!(exact_sinr(&alloc(&[1.0]), &ch, &lp, 0).is_err());
        let wrong_m = params(1.0, 1.0, 0.0, 5, 0.2);
        assert!(exact_sinr(&alloc(&[1.0, 1.0]), &ch, &wrong_m, 0).is_err());
    }

    #[test]
    fn exact_sinr_interference_hand_value() {
        // h1 = (1, 0), h2 = (1, 1)/1: |h1^H h2|^2/|h2|^2 = 1/2.
        let ch = channel(&[vec![1.0, 0.0], vec![1.0, 1.0]], &[1.0, 1.0]);
        let lp = params(1.0, 1.0, 0.0, 2, 0.2);
        // user 0: signal 2*1*1 = 2, interference 3 * 1/2 = 1.5, noise 1
        let s = exact_sinr(&alloc(&[2.0, 3.0]), &ch, &lp, 0).unwrap();
        assert_relative_eq!(s, 2.0 / 2.5, max_relative = 1e-12);
    }

    #[test]
    fn asymptotic_sinr_values() {
        let lp = params(1.0, 1.0, 0.0, 128, 0.2);
        let one = flat_channel(128, &[1.0]);
        assert_relative_eq!(asymptotic_sinr(&alloc(&[1.0]), &one, &lp, 0).unwrap(), 128.0);
        let two = flat_channel(128, &[1.0, 1.0]);
        assert_relative_eq!(asymptotic_sinr(&alloc(&[1.0, 1.0]), &two, &lp, 0).unwrap(), 64.0);
        let a = asymptotic_sinr(&alloc(&[1.0, 1.0]), &two, &lp, 0).unwrap();
        let b = asymptotic_sinr(&alloc(&[2.0, 1.0]), &two, &lp, 0).unwrap();
        assert_relative_eq!(b, 2.0 * a, max_relative = 1e-12);
    }

    #[test]
    fn user_rate_values() {
        let lp = params(1.0, 1.0, 0.0, 1, 1e-3);
        assert_eq!(user_rate(0.0, &lp), 0.0);
        assert_relative_eq!(user_rate(3.0 * lp.snr_gap, &lp), 2.0, max_relative = 1e-12);
        let wide = params(120e3, 1.0, 0.0, 1, 1e-3);
        assert_relative_eq!(user_rate(wide.snr_gap, &wide), 120_000.0, max_relative = 1e-12);
    }

    #[test]
    fn user_rate_is_increasing_and_concave() {
        let lp = params(1.0, 1.0, 0.0, 1, 1e-3);
        let h = 0.5;
        for x in [0.5, 3.0, 40.0] {
            let (a, b, c) = (user_rate(x - h, &lp), user_rate(x, &lp), user_rate(x + h, &lp));
            assert!(a < b && b < c);
            assert!(a - 2.0 * b + c < 0.0);
        }
    }

    #[test]
    fn sum_rate_cases() {
        let lp = params(1e3, 1.0, 0.0, 8, 1e-3);
        let ch = flat_channel(8, &[1.0, 0.5]);
        assert_eq!(sum_rate(&alloc(&[0.0, 0.0]), &ch, &lp).unwrap(), 0.0);
        let single = flat_channel(8, &[0.3]);
        let a = alloc(&[2.0]);
        let expect = user_rate(asymptotic_sinr(&a, &single, &lp, 0).unwrap(), &lp);
        assert_relative_eq!(sum_rate(&a, &single, &lp).unwrap(), expect);
    }

    #[test]
    fn sum_rate_matches_term_by_term_recomputation() {
        let ch = build_channel(&GeometryConfig::default(), 128, 3, 5).unwrap();
        let lp = LinkParams::new(120e3, 1e-20, 1e-3, 128, 1e-3).unwrap();
        let p = [0.2, 0.3, 0.5];
        // independent recomputation straight from the definitions
        let total: f64 = p.iter().sum();
        let expect: f64 = (0..3)
            .map(|k| {
                let beta = ch.large_scale[k];
                let sinr = p[k] * beta * 128.0 / (beta * (total - p[k]) + 1.2e-15);
                120e3 * (1.0 + sinr / lp.snr_gap).log2()
            })
            .sum();
        assert_relative_eq!(sum_rate(&alloc(&p), &ch, &lp).unwrap(), expect, max_relative = 1e-12);
    }

    #[test]
    fn lower_bound_rate_cases() {
        let lp = params(1.0, 1.0, 0.0, 128, 0.2);
        let one = flat_channel(128, &[1.0]);
        assert_relative_eq!(lower_bound_rate(&alloc(&[1.0]), &one, &lp, 0).unwrap(), 7.0, max_relative = 1e-12);
        // argument exactly one: 1 * 1 * 1 / (0 + 1)
        let unit = params(1.0, 1.0, 0.0, 1, 0.2);
        let ch = flat_channel(1, &[1.0]);
        assert_eq!(lower_bound_rate(&alloc(&[1.0]), &ch, &unit, 0).unwrap(), 0.0);
        assert!(matches!(
            lower_bound_rate(&alloc(&[0.0]), &ch, &unit, 0),
            Err(Error::ZeroPower { user: 0 })
        ));
        // negative values are passed through
        assert!(lower_bound_rate(&alloc(&[0.1]), &ch, &unit, 0).unwrap() < 0.0);
    }

    #[test]
    fn energy_efficiency_cases() {
        // one user, B = 1e6, sinr/mu = 31 -> 5 Mbit/s; p = 0.5, M P_c,m = 0.5
        let ch = flat_channel(1, &[1.0]);
        let lp = params(1e6, 0.5 / 31.0, 0.5, 1, 0.2);
        let ee = energy_efficiency(&alloc(&[0.5]), &ch, &lp).unwrap();
        assert_relative_eq!(ee, 5e6, max_relative = 1e-12);
        assert_eq!(energy_efficiency(&alloc(&[0.0]), &ch, &lp).unwrap(), 0.0);
        let more = lp.with_circuit_power_per_antenna(0.7);
        assert!(energy_efficiency(&alloc(&[0.5]), &ch, &more).unwrap() < ee);
        let none = lp.with_circuit_power_per_antenna(0.0);
        assert_eq!(energy_efficiency(&alloc(&[0.0]), &ch, &none), Err(Error::ZeroDenominator));
    }

    proptest! {
        #[test]
        fn lower_bound_never_exceeds_gapless_rate(
            p in prop::collection::vec(1e-6f64..1.0, 1..5),
            seed in 0u64..1000,
        ) {
            let ch = build_channel(&GeometryConfig::default(), 16, p.len(), seed).unwrap();
            let lp = LinkParams::new(120e3, 1e-20, 0.0, 16, 0.2).unwrap();
            let a = alloc(&p);
            for k in 0..p.len() {
                let lb = lower_bound_rate(&a, &ch, &lp, k).unwrap();
                let full = user_rate(asymptotic_sinr(&a, &ch, &lp, k).unwrap(), &lp);
                prop_assert!(lb <= full + 1e-9 * full.abs());
            }
        }

        #[test]
        fn asymptotic_sinr_monotone_in_own_and_other_power(
            p in prop::collection::vec(1e-4f64..1.0, 2..5),
            seed in 0u64..1000,
            bump in 1.01f64..3.0,
        ) {
            let ch = build_channel(&GeometryConfig::default(), 32, p.len(), seed).unwrap();
            let lp = LinkParams::new(120e3, 1e-20, 0.0, 32, 1e-3).unwrap();
            let base = asymptotic_sinr(&alloc(&p), &ch, &lp, 0).unwrap();
            let mut own = p.clone();
            own[0] *= bump;
            prop_assert!(asymptotic_sinr(&alloc(&own), &ch, &lp, 0).unwrap() > base);
            let mut other = p.clone();
            other[1] *= bump;
            prop_assert!(asymptotic_sinr(&alloc(&other), &ch, &lp, 0).unwrap() < base);
        }

        #[test]
        fn energy_efficiency_is_permutation_invariant(
            p in prop::collection::vec(1e-4f64..1.0, 2..5),
            seed in 0u64..1000,
            rot in 1usize..4,
        ) {
            let k = p.len();
            let ch = build_channel(&GeometryConfig::default(), 8, k, seed).unwrap();
            let lp = LinkParams::new(120e3, 1e-20, 1e-3, 8, 1e-3).unwrap();
            let perm: Vec<usize> = (0..k).map(|i| (i + rot) % k).collect();
            let cols: Vec<Vec<num_complex::Complex64>> =
                perm.iter().map(|&i| ch.small_scale.column(i).to_vec()).collect();
            let permuted = ChannelState::from_parts(
                ComplexMatrix::from_columns(cols).unwrap(),
                perm.iter().map(|&i| ch.large_scale[i]).collect(),
                perm.iter().map(|&i| ch.distances[i]).collect(),
            ).unwrap();
            let pp: Vec<f64> = perm.iter().map(|&i| p[i]).collect();
            let a = energy_efficiency(&alloc(&p), &ch, &lp).unwrap();
            let b = energy_efficiency(&alloc(&pp), &permuted, &lp).unwrap();
            prop_assert!((a - b).abs() <= 1e-12 * a.abs());
        }
    }
}
