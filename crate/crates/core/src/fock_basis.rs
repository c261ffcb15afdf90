//! Excitation-conserving truncated Fock spaces.
//!
//! A [`Basis`] is the ordered set of occupation vectors of an `N`-site chain
//! holding a fixed number of bosons, restricted either by a per-site ceiling
//! ([`TruncationScheme::MaxLevel`]) or by a cap on the number of doubly and
//! triply occupied sites ([`TruncationScheme::Bands`]). States are kept in
//! ascending lexicographic order so that indices are reproducible.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Bits used per site when packing an occupation vector into a `u128` key.
const BITS_PER_SITE: u32 = 3;
const SITE_MASK: u128 = (1 << BITS_PER_SITE) - 1;

/// Largest chain that can be enumerated (packing limit of the index map).
pub const MAX_ENUMERABLE_SITES: usize = (128 / BITS_PER_SITE) as usize;

/// Boson counts per site.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct OccupationVector(Vec<u8>);

impl OccupationVector {
    pub fn new(counts: Vec<u8>) -> Self {
        Self(counts)
    }

    /// Vacuum on `n_sites` sites.
    pub fn vacuum(n_sites: usize) -> Self {
        Self(vec![0; n_sites])
    }

    /// Half-filled alternating pattern `0101...`: one boson on every other
    /// site starting from the second, `floor(N/2)` bosons in total.
    pub fn alternating(n_sites: usize) -> Self {
        Self((0..n_sites).map(|i| (i % 2) as u8).collect())
    }

    /// Parses a bitstring / digit string such as `"00101"` or `"02100100"`.
    pub fn from_digits(s: &str) -> Result<Self> {
        s.chars()
            .map(|c| {
                c.to_digit(10)
                    .filter(|&d| d <= 7)
                    .map(|d| d as u8)
                    .ok_or_else(|| Error::InvalidArgument(format!("bad occupation digit {c:?}")))
            })
            .collect::<Result<Vec<_>>>()
            .map(Self)
    }

    pub fn counts(&self) -> &[u8] {
        &self.0
    }

    pub fn n_sites(&self) -> usize {
        self.0.len()
    }

    pub fn total(&self) -> usize {
        self.0.iter().map(|&c| c as usize).sum()
    }

    /// True when every site holds at most one boson.
    pub fn is_hard_core(&self) -> bool {
        self.0.iter().all(|&c| c <= 1)
    }

    /// Indices of occupied sites, ascending.
    pub fn occupied_sites(&self) -> Vec<usize> {
        self.0
            .iter()
            .enumerate()
            .filter(|(_, &c)| c > 0)
            .map(|(i, _)| i)
            .collect()
    }

    pub(crate) fn pack(counts: &[u8]) -> u128 {
        counts
            .iter()
            .enumerate()
            .fold(0u128, |acc, (i, &c)| acc | ((c as u128) << (BITS_PER_SITE * i as u32)))
    }

    #[allow(dead_code)]
    pub(crate) fn unpack(key: u128, n_sites: usize) -> Self {
        Self(
            (0..n_sites)
                .map(|i| ((key >> (BITS_PER_SITE * i as u32)) & SITE_MASK) as u8)
                .collect(),
        )
    }
}

impl fmt::Display for OccupationVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.0 {
            write!(f, "{c}")?;
        }
        Ok(())
    }
}

impl TryFrom<String> for OccupationVector {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        Self::from_digits(&s)
    }
}

impl From<OccupationVector> for String {
    fn from(v: OccupationVector) -> String {
        v.to_string()
    }
}

/// Which occupation vectors are admitted into a basis.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum TruncationScheme {
    /// At most `m` bosons on any site (`m = 1` is the qubit subspace).
    MaxLevel(u8),
    /// At most `doublons` sites with two bosons and `triplons` sites with
    /// three, none higher.
    Bands { doublons: usize, triplons: usize },
}

impl TruncationScheme {
    pub const QUBIT: Self = TruncationScheme::MaxLevel(1);

    pub fn validate(&self) -> Result<()> {
        match *self {
            TruncationScheme::MaxLevel(0) => invalid("MaxLevel requires m >= 1"),
            TruncationScheme::MaxLevel(m) if m > 7 => invalid("MaxLevel above 7 is not supported"),
            _ => Ok(()),
        }
    }

    /// Highest occupation any single site may hold.
    pub fn ceiling(&self) -> u8 {
        match *self {
            TruncationScheme::MaxLevel(m) => m,
            TruncationScheme::Bands { triplons, .. } if triplons > 0 => 3,
            TruncationScheme::Bands { doublons, .. } if doublons > 0 => 2,
            TruncationScheme::Bands { .. } => 1,
        }
    }

    pub fn admits(&self, counts: &[u8]) -> bool {
        match *self {
            TruncationScheme::MaxLevel(m) => counts.iter().all(|&c| c <= m),
            TruncationScheme::Bands { doublons, triplons } => {
                let mut d = 0;
                let mut t = 0;
                for &c in counts {
                    match c {
                        0 | 1 => {}
                        2 => d += 1,
                        3 => t += 1,
                        _ => return false,
                    }
                }
                d <= doublons && t <= triplons
            }
        }
    }
}

impl fmt::Display for TruncationScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TruncationScheme::MaxLevel(m) => write!(f, "m{m}"),
            TruncationScheme::Bands { doublons, triplons } => write!(f, "[{doublons},{triplons}]"),
        }
    }
}

impl FromStr for TruncationScheme {
    type Err = Error;

    /// Accepts `m3`, `max3`, `[2,1]`, `b2,1` and `bands2,1`.
    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim().to_ascii_lowercase();
        let bad = || Error::InvalidArgument(format!("unrecognised truncation scheme {s:?}"));
        let scheme = if let Some(rest) = t.strip_prefix("max").or_else(|| t.strip_prefix('m')) {
            TruncationScheme::MaxLevel(rest.parse().map_err(|_| bad())?)
        } else {
            let body = t
                .strip_prefix("bands")
                .or_else(|| t.strip_prefix('b'))
                .unwrap_or(&t)
                .trim_start_matches('[')
                .trim_end_matches(']');
            let mut parts = body.split(',').map(|p| p.trim().parse::<usize>());
            match (parts.next(), parts.next(), parts.next()) {
                (Some(Ok(d)), Some(Ok(tr)), None) => TruncationScheme::Bands { doublons: d, triplons: tr },
                _ => return Err(bad()),
            }
        };
        scheme.validate()?;
        Ok(scheme)
    }
}

impl TryFrom<String> for TruncationScheme {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<TruncationScheme> for String {
    fn from(s: TruncationScheme) -> String {
        s.to_string()
    }
}

/// Number of bosons at half filling.
pub fn half_filling(n_sites: usize) -> usize {
    n_sites / 2
}

/// Enumerated truncated Fock space with bidirectional index maps.
///
/// Immutable after construction.
#[derive(Clone, Debug, PartialEq)]
pub struct Basis {
    n_sites: usize,
    n_exc: usize,
    scheme: TruncationScheme,
    states: Vec<OccupationVector>,
    index: HashMap<u128, usize>,
}

impl Basis {
    pub fn n_sites(&self) -> usize {
        self.n_sites
    }

    pub fn n_exc(&self) -> usize {
        self.n_exc
    }

    pub fn scheme(&self) -> TruncationScheme {
        self.scheme
    }

    pub fn dim(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn states(&self) -> &[OccupationVector] {
        &self.states
    }

    pub fn state(&self, k: usize) -> &OccupationVector {
        &self.states[k]
    }

    pub fn index_of(&self, state: &OccupationVector) -> Option<usize> {
        if state.n_sites() != self.n_sites {
            return None;
        }
        self.index_of_counts(state.counts())
    }

    pub(crate) fn index_of_counts(&self, counts: &[u8]) -> Option<usize> {
        self.index.get(&OccupationVector::pack(counts)).copied()
    }

    /// Same chain and excitation number, possibly different truncation.
    pub fn same_sector(&self, other: &Basis) -> bool {
        self.n_sites == other.n_sites && self.n_exc == other.n_exc
    }
}

/// Enumerates every occupation vector of `n_sites` sites holding `n_exc`
/// bosons that the scheme admits, in lexicographic order.
pub fn enumerate_basis(n_sites: usize, n_exc: usize, scheme: TruncationScheme) -> Result<Basis> {
    scheme.validate()?;
    if n_sites == 0 {
        return invalid("a chain needs at least one site");
    }
    if n_sites > MAX_ENUMERABLE_SITES {
        return invalid(format!(
            "cannot enumerate {n_sites} sites (packing limit {MAX_ENUMERABLE_SITES})"
        ));
    }
    if n_exc > n_sites * scheme.ceiling() as usize {
        return invalid(format!(
            "{n_exc} excitations do not fit on {n_sites} sites under {scheme}"
        ));
    }

    let ceiling = scheme.ceiling();
    let mut states = Vec::new();
    let mut current = vec![0u8; n_sites];
    fill(&mut current, 0, n_exc, ceiling, &scheme, &mut states);

    let index = states
        .iter()
        .enumerate()
        .map(|(k, s)| (OccupationVector::pack(s.counts()), k))
        .collect();
    Ok(Basis { n_sites, n_exc, scheme, states, index })
}

fn fill(
    current: &mut [u8],
    site: usize,
    remaining: usize,
    ceiling: u8,
    scheme: &TruncationScheme,
    out: &mut Vec<OccupationVector>,
) {
    let n = current.len();
    if site == n {
        if remaining == 0 && scheme.admits(current) {
            out.push(OccupationVector(current.to_vec()));
        }
        return;
    }
    // the sites after this one can absorb at most this many
    let capacity_after = (n - site - 1) * ceiling as usize;
    let lo = remaining.saturating_sub(capacity_after);
    let hi = remaining.min(ceiling as usize);
    for c in lo..=hi {
        current[site] = c as u8;
        // prune early on band caps
        if site + 1 < n && !scheme.admits(&current[..=site]) {
            continue;
        }
        fill(current, site + 1, remaining - c, ceiling, scheme, out);
    }
    current[site] = 0;
}

fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k).fold(1u128, |acc, i| acc * (n - i) as u128 / (i + 1) as u128)
}

/// Exact basis size from closed-form counting.
///
/// Binomial for the qubit subspace, sums of multinomials over the allowed
/// doublon/triplon numbers for bands, and a site-by-site convolution for a
/// general per-site ceiling.
pub fn dimension(n_sites: usize, n_exc: usize, scheme: TruncationScheme) -> u128 {
    match scheme {
        TruncationScheme::MaxLevel(1) => binomial(n_sites, n_exc),
        TruncationScheme::MaxLevel(m) => bounded_compositions(n_sites, n_exc, m as usize),
        TruncationScheme::Bands { doublons, triplons } => {
            let mut total = 0u128;
            for t in 0..=triplons {
                for d in 0..=doublons {
                    let used = 2 * d + 3 * t;
                    if used > n_exc || d + t > n_sites {
                        continue;
                    }
                    let singles = n_exc - used;
                    if d + t + singles > n_sites {
                        continue;
                    }
                    // N! / (t! d! s! (N - t - d - s)!)
                    total += binomial(n_sites, t)
                        * binomial(n_sites - t, d)
                        * binomial(n_sites - t - d, singles);
                }
            }
            total
        }
    }
}

/// Number of ways to place `total` bosons on `sites` sites with at most
/// `cap` per site, by convolution over sites.
fn bounded_compositions(sites: usize, total: usize, cap: usize) -> u128 {
    let mut ways = vec![0u128; total + 1];
    ways[0] = 1;
    for _ in 0..sites {
        let mut next = vec![0u128; total + 1];
        for (k, &w) in ways.iter().enumerate() {
            if w == 0 {
                continue;
            }
            for c in 0..=cap.min(total - k) {
                next[k + c] += w;
            }
        }
        ways = next;
    }
    ways[total]
}

/// Fitted asymptotic basis size at half filling (valid for `N >= 10`).
///
/// `2^N/sqrt(N)` for qubits, `2.05^N` for the single-doublon band truncation
/// and `0.15 * 2.42^N` for three-level sites. Other schemes have no fitted
/// form.
pub fn dimension_estimate(n_sites: usize, scheme: TruncationScheme) -> Option<f64> {
    let n = n_sites as f64;
    match scheme {
        TruncationScheme::MaxLevel(1) => Some(2f64.powf(n) / n.sqrt()),
        TruncationScheme::Bands { doublons: 1, triplons: 0 } => Some(2.05f64.powf(n)),
        TruncationScheme::MaxLevel(2) => Some(0.15 * 2.42f64.powf(n)),
        _ => None,
    }
}

/// Exponential scalings quoted for the band truncations `[1,0]`, `[2,0]`
/// and `[2,1]` in the resource discussion: `2^N`, `2.1^N`, `2.3^N`.
pub fn band_scaling_estimate(n_sites: usize, scheme: TruncationScheme) -> Option<f64> {
    let base = match scheme {
        TruncationScheme::Bands { doublons: 1, triplons: 0 } => 2.0,
        TruncationScheme::Bands { doublons: 2, triplons: 0 } => 2.1,
        TruncationScheme::Bands { doublons: 2, triplons: 1 } => 2.3,
        _ => return None,
    };
    Some(f64::powf(base, n_sites as f64))
}

/// Stirling-accurate central binomial form `2^N / sqrt(pi N / 2)`.
pub fn qubit_dimension_stirling(n_sites: usize) -> f64 {
    let n = n_sites as f64;
    2f64.powf(n) / (std::f64::consts::PI * n / 2.0).sqrt()
}

/// Hardware assumptions for a distributed state-vector run.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResourceProfile {
    pub bytes_per_amplitude: u64,
    pub sockets: u64,
    /// Effective network bandwidth per socket in bytes per second.
    pub bandwidth_per_socket: f64,
    pub swaps_per_step: u64,
    pub steps: u64,
}

impl Default for ResourceProfile {
    /// Double-precision complex amplitudes, 64 sockets at 6 GB/s, 5 swaps per
    /// Runge-Kutta step, 1000 steps.
    fn default() -> Self {
        Self {
            bytes_per_amplitude: 16,
            sockets: 64,
            bandwidth_per_socket: 6e9,
            swaps_per_step: 5,
            steps: 1000,
        }
    }
}

impl ResourceProfile {
    pub fn validate(&self) -> Result<()> {
        if self.bytes_per_amplitude == 0
            || self.sockets == 0
            || !(self.bandwidth_per_socket > 0.0)
            || self.swaps_per_step == 0
            || self.steps == 0
        {
            return invalid("resource profile fields must be strictly positive");
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResourceEstimate {
    pub memory_bytes: u128,
    pub comm_seconds: f64,
}

/// Memory for one state and the bandwidth-bound communication time.
///
/// Every swap moves the whole state out of and back into each node, hence
/// the factor of two.
pub fn resource_estimate(dim: u128, profile: &ResourceProfile) -> Result<ResourceEstimate> {
    profile.validate()?;
    let memory_bytes = dim * profile.bytes_per_amplitude as u128;
    let per_swap = 2.0 * memory_bytes as f64 / (profile.sockets as f64 * profile.bandwidth_per_socket);
    let comm_seconds = (profile.steps * profile.swaps_per_step) as f64 * per_swap;
    Ok(ResourceEstimate { memory_bytes, comm_seconds })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Independent oracle: scan every vector in `[0, ceiling]^N` by counting
    /// in base `ceiling + 1`.
    fn brute_force(n: usize, n_exc: usize, scheme: TruncationScheme) -> Vec<Vec<u8>> {
        let base = scheme.ceiling() as usize + 1;
        let mut out = Vec::new();
        for code in 0..base.pow(n as u32) {
            let mut c = code;
            let mut v = vec![0u8; n];
            for slot in v.iter_mut().rev() {
                *slot = (c % base) as u8;
                c /= base;
            }
            if v.iter().map(|&x| x as usize).sum::<usize>() == n_exc && scheme.admits(&v) {
                out.push(v);
            }
        }
        out
    }

    fn schemes() -> Vec<TruncationScheme> {
        vec![
            TruncationScheme::MaxLevel(1),
            TruncationScheme::MaxLevel(2),
            TruncationScheme::MaxLevel(3),
            TruncationScheme::Bands { doublons: 0, triplons: 0 },
            TruncationScheme::Bands { doublons: 1, triplons: 0 },
            TruncationScheme::Bands { doublons: 2, triplons: 0 },
            TruncationScheme::Bands { doublons: 2, triplons: 1 },
            TruncationScheme::Bands { doublons: 0, triplons: 1 },
        ]
    }

    #[test]
    fn five_sites_two_excitations() {
        let b = enumerate_basis(5, 2, TruncationScheme::QUBIT).unwrap();
        assert_eq!(b.dim(), 10);
        assert!(b.index_of(&OccupationVector::from_digits("00101").unwrap()).is_some());
    }

    #[test]
    fn vacuum_basis() {
        let b = enumerate_basis(1, 0, TruncationScheme::QUBIT).unwrap();
        assert_eq!(b.dim(), 1);
        assert_eq!(b.state(0).counts(), &[0]);
        for s in schemes() {
            assert_eq!(dimension(7, 0, s), 1);
        }
    }

    #[test]
    fn single_doublon_eight_sites_matches_enumeration() {
        let s = TruncationScheme::Bands { doublons: 1, triplons: 0 };
        let oracle = brute_force(8, 4, s);
        let with_doublon = oracle.iter().filter(|v| v.contains(&2)).count();
        assert_eq!(oracle.len() - with_doublon, 70);
        assert_eq!(with_doublon, 168);
        let b = enumerate_basis(8, 4, s).unwrap();
        assert_eq!(b.dim(), 238);
        assert_eq!(dimension(8, 4, s), 238);
    }

    #[test]
    fn nine_sites_band_counts() {
        assert_eq!(dimension(9, 4, TruncationScheme::QUBIT), 126);
        let s = TruncationScheme::Bands { doublons: 2, triplons: 0 };
        let oracle = brute_force(9, 4, s);
        let doublons = |v: &Vec<u8>| v.iter().filter(|&&c| c == 2).count();
        let bands: Vec<usize> = (0..=2).map(|d| oracle.iter().filter(|v| doublons(v) == d).count()).collect();
        assert_eq!(bands, vec![126, 252, 36]);
        assert_eq!(dimension(9, 4, s), 414);
    }

    #[test]
    fn closed_form_matches_enumeration_small_chains() {
        for n in 1..=7 {
            for s in schemes() {
                for k in 0..=(n * s.ceiling() as usize) {
                    let oracle = brute_force(n, k, s);
                    let b = enumerate_basis(n, k, s).unwrap();
                    assert_eq!(b.dim(), oracle.len(), "n={n} k={k} {s}");
                    assert_eq!(dimension(n, k, s) as usize, oracle.len(), "n={n} k={k} {s}");
                    let listed: Vec<Vec<u8>> = b.states().iter().map(|v| v.counts().to_vec()).collect();
                    let mut sorted = oracle.clone();
                    sorted.sort();
                    assert_eq!(listed, sorted, "lexicographic order n={n} k={k} {s}");
                }
            }
        }
    }

    #[test]
    fn empty_basis_is_valid() {
        // two bosons, no doublons allowed, one site
        let b = enumerate_basis(1, 2, TruncationScheme::MaxLevel(2)).unwrap();
        assert_eq!(b.dim(), 1);
        let b = enumerate_basis(2, 3, TruncationScheme::Bands { doublons: 0, triplons: 1 }).unwrap();
        // only 3 + 0 and 0 + 3 are admissible
        assert_eq!(b.dim(), 2);
        let b = enumerate_basis(3, 3, TruncationScheme::Bands { doublons: 0, triplons: 0 }).unwrap();
        assert_eq!(b.dim(), 1);
        let b = enumerate_basis(2, 4, TruncationScheme::Bands { doublons: 1, triplons: 1 }).unwrap();
        // 3 + 1 and 1 + 3; 2 + 2 needs two doublons
        assert_eq!(b.dim(), 2);
        let b = enumerate_basis(2, 6, TruncationScheme::Bands { doublons: 1, triplons: 1 }).unwrap();
        assert_eq!(b.dim(), 0);
        assert!(b.is_empty());
    }

    #[test]
    fn rejects_impossible_fillings() {
        assert!(enumerate_basis(3, 4, TruncationScheme::QUBIT).is_err());
        assert!(enumerate_basis(0, 0, TruncationScheme::QUBIT).is_err());
        assert!(enumerate_basis(3, 1, TruncationScheme::MaxLevel(0)).is_err());
    }

    #[test]
    fn bands_zero_equals_qubits() {
        for n in 1..=10 {
            for k in 0..=n {
                assert_eq!(
                    dimension(n, k, TruncationScheme::Bands { doublons: 0, triplons: 0 }),
                    dimension(n, k, TruncationScheme::QUBIT)
                );
            }
        }
    }

    #[test]
    fn qubit_dimension_estimate_at_twenty() {
        let est = dimension_estimate(20, TruncationScheme::QUBIT).unwrap();
        assert!((est - 234_468.7).abs() < 0.1, "{est}");
        let qutrit = dimension_estimate(30, TruncationScheme::MaxLevel(2)).unwrap();
        assert!((qutrit - 0.15 * 2.42f64.powi(30)).abs() / qutrit < 1e-12);
        assert_eq!(dimension_estimate(20, TruncationScheme::MaxLevel(4)), None);
    }

    #[test]
    fn qubit_estimate_relative_error() {
        // 2^N/sqrt(N) undershoots sqrt(pi/2) relative to the central binomial;
        // the Stirling form tracks it to O(1/N).
        for n in 20..=40 {
            let exact = dimension(n, half_filling(n), TruncationScheme::QUBIT) as f64;
            let coarse = dimension_estimate(n, TruncationScheme::QUBIT).unwrap();
            let rel = (coarse - exact).abs() / exact;
            assert!(rel > 0.2 && rel < 0.3, "n={n} rel={rel}");
            let fine = qubit_dimension_stirling(n);
            let rel = (fine - exact).abs() / exact;
            assert!(rel < 0.15 && rel < 1.0 / n as f64, "n={n} rel={rel}");
        }
    }

    #[test]
    fn seventy_terabytes_at_two_to_forty_two() {
        let est = resource_estimate(1u128 << 42, &ResourceProfile::default()).unwrap();
        assert_eq!(est.memory_bytes, 16 * (1u128 << 42));
        assert!((est.memory_bytes as f64 / 1e12 - 70.4).abs() < 0.1);
        let unit = resource_estimate(1, &ResourceProfile::default()).unwrap();
        assert_eq!(unit.memory_bytes, 16);
    }

    #[test]
    fn terabyte_state_takes_about_eight_hours() {
        let dim = 1_000_000_000_000u128 / 16;
        let est = resource_estimate(dim, &ResourceProfile::default()).unwrap();
        // 5000 swaps * 2 TB / (64 * 6 GB/s)
        let expected = 5000.0 * 2e12 / (64.0 * 6e9);
        assert!((est.comm_seconds - expected).abs() < 1e-6 * expected);
        let hours = est.comm_seconds / 3600.0;
        assert!(hours > 4.0 && hours < 16.0, "{hours}");
    }

    #[test]
    fn invalid_profile_rejected() {
        let p = ResourceProfile { sockets: 0, ..Default::default() };
        assert!(resource_estimate(10, &p).is_err());
    }

    #[test]
    fn scheme_parsing_round_trip() {
        for s in schemes() {
            let text = s.to_string();
            assert_eq!(text.parse::<TruncationScheme>().unwrap(), s);
        }
        assert_eq!("b1,0".parse::<TruncationScheme>().unwrap(), TruncationScheme::Bands { doublons: 1, triplons: 0 });
        assert!("q3".parse::<TruncationScheme>().is_err());
    }

    #[test]
    fn pack_round_trip() {
        let v = OccupationVector::from_digits("02100100").unwrap();
        let key = OccupationVector::pack(v.counts());
        assert_eq!(OccupationVector::unpack(key, 8), v);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(64))]

            #[test]
            fn index_round_trip(n in 1usize..=9, frac in 0.0f64..=1.0, m in 1u8..=3) {
                let s = TruncationScheme::MaxLevel(m);
                let k = ((n * m as usize) as f64 * frac).round() as usize;
                let b = enumerate_basis(n, k, s).unwrap();
                for (i, st) in b.states().iter().enumerate() {
                    prop_assert_eq!(b.index_of(st), Some(i));
                    prop_assert_eq!(st.total(), k);
                }
                prop_assert_eq!(b.dim() as u128, dimension(n, k, s));
            }

            #[test]
            fn qubit_dimension_symmetry(n in 1usize..=40, k in 0usize..=40) {
                prop_assume!(k <= n);
                prop_assert_eq!(dimension(n, k, TruncationScheme::QUBIT), dimension(n, n - k, TruncationScheme::QUBIT));
            }

            #[test]
            fn band_monotonicity(n in 1usize..=16, k in 0usize..=12, d in 0usize..=3, t in 0usize..=2) {
                let small = dimension(n, k, TruncationScheme::Bands { doublons: d, triplons: t });
                let more_d = dimension(n, k, TruncationScheme::Bands { doublons: d + 1, triplons: t });
                let more_t = dimension(n, k, TruncationScheme::Bands { doublons: d, triplons: t + 1 });
                prop_assert!(small <= more_d && small <= more_t);
                prop_assert!(small <= dimension(n, k, TruncationScheme::MaxLevel(3)));
            }
        }
    }
}
