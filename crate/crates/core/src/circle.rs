//! Angles and generalized intervals on the circle `[0, 2π)`.
//!
//! Angles are stored as fixed-point fractions of a full turn (`u64`, one unit
//! is `2π / 2⁶⁴` radians). Arithmetic modulo `2π` is then wrapping integer
//! arithmetic, so the reflection `α ↦ (θ − α) mod 2π` is an exact involution
//! and interval membership has no rounding at the wrap point.

use std::cmp::Ordering;
use std::f64::consts::TAU;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::RngStream;

/// Number of fixed-point units in one full turn.
pub const TURN: u128 = 1 << 64;

const RAD_PER_UNIT: f64 = TAU / 18_446_744_073_709_551_616.0;

/// A point on the circle, normalized to `[0, 2π)`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Angle(u64);

impl Angle {
    pub const ZERO: Angle = Angle(0);
    pub const HALF_TURN: Angle = Angle(1 << 63);

    /// Normalizes an arbitrary finite radian value into `[0, 2π)`.
    pub fn new(radians: f64) -> Self {
        debug_assert!(radians.is_finite(), "angle must be finite");
        let mut frac = (radians / TAU) % 1.0;
        if frac < 0.0 {
            frac += 1.0;
        }
        if frac >= 1.0 {
            frac = 0.0;
        }
        // f64 -> u64 saturates, frac < 1 keeps us strictly below 2^64.
        Angle((frac * TURN as f64) as u64)
    }

    pub const fn from_turns(units: u64) -> Self {
        Angle(units)
    }

    pub const fn turns(self) -> u64 {
        self.0
    }

    /// Radian value in `[0, 2π)`.
    pub fn radians(self) -> f64 {
        let r = self.0 as f64 * RAD_PER_UNIT;
        if r >= TAU {
            f64::from_bits(TAU.to_bits() - 1)
        } else {
            r
        }
    }

    /// Counter-clockwise distance from `self` to `other`, in units.
    pub fn distance_to(self, other: Angle) -> u64 {
        other.0.wrapping_sub(self.0)
    }

    pub fn wrapping_add_units(self, units: u64) -> Angle {
        Angle(self.0.wrapping_add(units))
    }
}

impl fmt::Display for Angle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.radians())
    }
}

impl Serialize for Angle {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_f64(self.radians())
    }
}

impl<'de> Deserialize<'de> for Angle {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let r = f64::deserialize(d)?;
        if !r.is_finite() {
            return Err(serde::de::Error::custom("angle must be finite"));
        }
        Ok(Angle::new(r))
    }
}

/// `g_θ(α) = (θ − α) mod 2π`. Its own inverse.
#[inline]
pub fn reflect(theta: Angle, alpha: Angle) -> Angle {
    Angle(theta.0.wrapping_sub(alpha.0))
}

/// The three interval families used by the shrinkage procedure.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IntervalKind {
    /// Half-open `[α, β)` with wrap-around; `α = β` is the full circle.
    I,
    /// Same as `I` except `α = β` is the empty set.
    J,
    /// Open `(α, β)` with wrap-around; `α = β` is the full circle.
    Open,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct GeneralizedInterval {
    pub kind: IntervalKind,
    pub lo: Angle,
    pub hi: Angle,
}

impl GeneralizedInterval {
    pub fn i(lo: Angle, hi: Angle) -> Self {
        Self { kind: IntervalKind::I, lo, hi }
    }

    pub fn j(lo: Angle, hi: Angle) -> Self {
        Self { kind: IntervalKind::J, lo, hi }
    }

    pub fn open(lo: Angle, hi: Angle) -> Self {
        Self { kind: IntervalKind::Open, lo, hi }
    }

    pub fn full() -> Self {
        Self::i(Angle::ZERO, Angle::ZERO)
    }

    pub fn is_full(&self) -> bool {
        self.lo == self.hi && self.kind != IntervalKind::J
    }

    pub fn is_empty(&self) -> bool {
        self.lo == self.hi && self.kind == IntervalKind::J
    }

    pub fn contains(&self, gamma: Angle) -> bool {
        let (a, b, g) = (self.lo.0, self.hi.0, gamma.0);
        match self.kind {
            IntervalKind::I | IntervalKind::J => match a.cmp(&b) {
                Ordering::Less => a <= g && g < b,
                Ordering::Greater => g < b || g >= a,
                Ordering::Equal => self.kind == IntervalKind::I,
            },
            IntervalKind::Open => match a.cmp(&b) {
                Ordering::Less => a < g && g < b,
                Ordering::Greater => g < b || g > a,
                Ordering::Equal => true,
            },
        }
    }

    /// Lebesgue measure in fixed-point units; the full circle is [`TURN`].
    pub fn length_units(&self) -> u128 {
        if self.lo == self.hi {
            if self.kind == IntervalKind::J {
                0
            } else {
                TURN
            }
        } else {
            u128::from(self.lo.distance_to(self.hi))
        }
    }

    /// Lebesgue measure in radians.
    pub fn length(&self) -> f64 {
        units_to_radians(self.length_units())
    }

    /// Uniform draw from the interval, consuming one slot of `rng`.
    ///
    /// For `α < β` this is a uniform draw on `[α, β)`. For `α ≥ β` a value `v`
    /// is drawn on `[α − 2π, β)` and `2π` is added when `v < 0`; in fixed-point
    /// units that is a wrapping offset from `α`.
    pub fn sample_uniform(&self, rng: &mut RngStream) -> Result<Angle> {
        let len = self.length_units();
        if len == 0 {
            return Err(Error::ZeroLengthInterval);
        }
        Ok(sample_offset(self.lo, len, rng.next_word()))
    }

    /// Decomposition into at most two linear pieces `[start, end)` in units,
    /// with `end ≤ TURN`. Endpoint openness is ignored (measure zero).
    pub fn segments(&self) -> Segments {
        let a = u128::from(self.lo.0);
        let b = u128::from(self.hi.0);
        let mut out = Segments::default();
        match a.cmp(&b) {
            Ordering::Less => out.push(a, b),
            Ordering::Greater => {
                out.push(0, b);
                out.push(a, TURN);
            }
            Ordering::Equal => {
                if self.kind != IntervalKind::J {
                    out.push(0, TURN);
                }
            }
        }
        out
    }
}

impl fmt::Display for GeneralizedInterval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self.kind {
            IntervalKind::I => "I",
            IntervalKind::J => "J",
            IntervalKind::Open => "I°",
        };
        write!(f, "{}({}, {})", name, self.lo, self.hi)
    }
}

#[inline]
fn sample_offset(lo: Angle, len: u128, word: u64) -> Angle {
    let offset = if len >= TURN {
        word
    } else {
        ((u128::from(word) * len) >> 64) as u64
    };
    lo.wrapping_add_units(offset)
}

pub(crate) fn units_to_radians(units: u128) -> f64 {
    units as f64 * RAD_PER_UNIT
}

/// Up to two `[start, end)` pieces in fixed-point units.
#[derive(Clone, Copy, Debug, Default)]
pub struct Segments {
    items: [(u128, u128); 2],
    len: usize,
}

impl Segments {
    fn push(&mut self, start: u128, end: u128) {
        if end > start {
            self.items[self.len] = (start, end);
            self.len += 1;
        }
    }

    pub fn as_slice(&self) -> &[(u128, u128)] {
        &self.items[..self.len]
    }
}

/// `g_θ(I°(α, β)) = I°(g_θ(β), g_θ(α))`.
pub fn reflect_interval(theta: Angle, iv: GeneralizedInterval) -> Result<GeneralizedInterval> {
    if iv.kind != IntervalKind::Open {
        return Err(Error::PreconditionViolated(format!(
            "reflect_interval expects an open interval, got {iv}"
        )));
    }
    Ok(GeneralizedInterval::open(reflect(theta, iv.hi), reflect(theta, iv.lo)))
}

/// A finite union of open arcs: the canonical way to describe a target set
/// `S`, or test sets `F`, `G`, `B`, for shrinkage experiments.
#[derive(Clone, Debug, PartialEq)]
pub struct ArcSet {
    arcs: Vec<GeneralizedInterval>,
    merged: Vec<(u128, u128)>,
}

impl ArcSet {
    pub const MAX_ARCS: usize = 8;

    pub fn new(arcs: Vec<GeneralizedInterval>) -> Result<Self> {
        if arcs.len() > Self::MAX_ARCS {
            return Err(Error::Config(format!(
                "at most {} arcs are supported, got {}",
                Self::MAX_ARCS,
                arcs.len()
            )));
        }
        if let Some(bad) = arcs.iter().find(|a| a.kind != IntervalKind::Open) {
            return Err(Error::Config(format!("arc {bad} is not an open interval")));
        }
        let mut pieces: Vec<(u128, u128)> =
            arcs.iter().flat_map(|a| a.segments().as_slice().to_vec()).collect();
        pieces.sort_unstable();
        let mut merged: Vec<(u128, u128)> = Vec::with_capacity(pieces.len());
        for (s, e) in pieces {
            match merged.last_mut() {
                Some(last) if s <= last.1 => last.1 = last.1.max(e),
                _ => merged.push((s, e)),
            }
        }
        Ok(Self { arcs, merged })
    }

    /// Builds from `(lo, hi)` radian pairs, each the open arc `I°(lo, hi)`.
    pub fn from_radians(pairs: &[(f64, f64)]) -> Result<Self> {
        Self::new(
            pairs
                .iter()
                .map(|&(a, b)| GeneralizedInterval::open(Angle::new(a), Angle::new(b)))
                .collect(),
        )
    }

    pub fn full() -> Self {
        Self::new(vec![GeneralizedInterval::open(Angle::ZERO, Angle::ZERO)])
            .expect("one arc is within limits")
    }

    pub fn empty() -> Self {
        Self::new(Vec::new()).expect("no arcs is within limits")
    }

    pub fn arcs(&self) -> &[GeneralizedInterval] {
        &self.arcs
    }

    pub fn contains(&self, gamma: Angle) -> bool {
        self.arcs.iter().any(|a| a.contains(gamma))
    }

    pub fn measure_units(&self) -> u128 {
        self.merged.iter().map(|(s, e)| e - s).sum()
    }

    /// Lebesgue measure in radians.
    pub fn measure(&self) -> f64 {
        units_to_radians(self.measure_units())
    }

    /// Measure of the intersection with a generalized interval, in units.
    pub fn measure_within_units(&self, iv: &GeneralizedInterval) -> u128 {
        let mut total = 0;
        for &(s, e) in iv.segments().as_slice() {
            for &(ms, me) in &self.merged {
                let lo = s.max(ms);
                let hi = e.min(me);
                if hi > lo {
                    total += hi - lo;
                }
            }
        }
        total
    }

    /// Smallest `q` with `λ(S ∩ [0, q)) ≥ p λ(S)`, for `p` in `[0, 1]`.
    pub fn quantile(&self, p: f64) -> Angle {
        let total = self.measure_units();
        let mut want = (p.clamp(0.0, 1.0) * total as f64) as u128;
        for &(s, e) in &self.merged {
            if want <= e - s {
                return Angle::from_turns((s + want).min(TURN - 1) as u64);
            }
            want -= e - s;
        }
        Angle::ZERO
    }

    /// True when `other ⊆ self`, up to endpoints.
    pub fn covers(&self, other: &ArcSet) -> bool {
        other.merged.iter().all(|&(s, e)| {
            self.merged.iter().any(|&(ms, me)| ms <= s && e <= me)
        })
    }

    /// Uniform draw from the set (`U_S`).
    pub fn sample_uniform(&self, rng: &mut RngStream) -> Result<Angle> {
        let total = self.measure_units();
        if total == 0 {
            return Err(Error::ZeroLengthInterval);
        }
        loop {
            let word = rng.next_word();
            let mut offset = if total >= TURN {
                u128::from(word)
            } else {
                (u128::from(word) * total) >> 64
            };
            let mut point = 0u128;
            for &(s, e) in &self.merged {
                if offset < e - s {
                    point = s + offset;
                    break;
                }
                offset -= e - s;
            }
            let gamma = Angle::from_turns(point as u64);
            // Only an endpoint of an open arc can miss, with probability ~2^-64.
            if self.contains(gamma) {
                return Ok(gamma);
            }
        }
    }

    /// Image of the set under `g_θ`.
    pub fn reflect(&self, theta: Angle) -> ArcSet {
        let arcs = self
            .arcs
            .iter()
            .map(|a| reflect_interval(theta, *a).expect("arcs are open intervals"))
            .collect();
        ArcSet::new(arcs).expect("reflection preserves arc count")
    }
}

impl fmt::Display for ArcSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.arcs.is_empty() {
            return write!(f, "∅");
        }
        for (k, a) in self.arcs.iter().enumerate() {
            if k > 0 {
                write!(f, " ∪ ")?;
            }
            write!(f, "{a}")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};

    fn a(x: f64) -> Angle {
        Angle::new(x)
    }

    #[test]
    fn normalization() {
        assert_eq!(a(0.0), Angle::ZERO);
        assert_eq!(a(-0.0), Angle::ZERO);
        assert_eq!(a(TAU), Angle::ZERO);
        assert_eq!(a(-TAU), Angle::ZERO);
        assert!((a(-FRAC_PI_2).radians() - 3.0 * FRAC_PI_2).abs() < 1e-15);
        assert!((a(5.0 * PI).radians() - PI).abs() < 1e-14);
        assert!(a(f64::from_bits(TAU.to_bits() - 1)).radians() < TAU);
        assert!(Angle::from_turns(u64::MAX).radians() < TAU);
    }

    #[test]
    fn membership_examples() {
        assert!(GeneralizedInterval::i(a(FRAC_PI_2), a(PI)).contains(a(3.0 * FRAC_PI_4)));
        assert!(GeneralizedInterval::i(a(3.0 * FRAC_PI_2), a(FRAC_PI_2)).contains(Angle::ZERO));
        for x in [0.0, 1.0, 3.0, 6.0] {
            assert!(!GeneralizedInterval::j(a(2.0), a(2.0)).contains(a(x)));
            assert!(GeneralizedInterval::i(a(2.0), a(2.0)).contains(a(x)));
            assert!(GeneralizedInterval::open(a(2.0), a(2.0)).contains(a(x)));
        }
        // endpoint semantics
        let i = GeneralizedInterval::i(a(1.0), a(2.0));
        assert!(i.contains(i.lo) && !i.contains(i.hi));
        let o = GeneralizedInterval::open(a(1.0), a(2.0));
        assert!(!o.contains(o.lo) && !o.contains(o.hi));
        let wrap = GeneralizedInterval::open(a(5.0), a(1.0));
        assert!(wrap.contains(Angle::ZERO) && !wrap.contains(wrap.lo));
        let wrap_i = GeneralizedInterval::i(a(5.0), a(1.0));
        assert!(wrap_i.contains(wrap_i.lo) && !wrap_i.contains(wrap_i.hi));
    }

    #[test]
    fn length_examples() {
        let close = |x: f64, y: f64| (x - y).abs() < 1e-14;
        assert!(close(GeneralizedInterval::i(a(FRAC_PI_2), a(PI)).length(), FRAC_PI_2));
        assert!(close(GeneralizedInterval::i(a(3.0 * FRAC_PI_2), a(FRAC_PI_2)).length(), PI));
        assert_eq!(GeneralizedInterval::j(a(1.0), a(1.0)).length(), 0.0);
        assert_eq!(GeneralizedInterval::i(a(1.0), a(1.0)).length(), TAU);
    }

    #[test]
    fn zero_length_sampling_is_an_error() {
        let mut rng = RngStream::new(0);
        assert_eq!(
            GeneralizedInterval::j(a(1.0), a(1.0)).sample_uniform(&mut rng),
            Err(Error::ZeroLengthInterval)
        );
        assert_eq!(ArcSet::empty().sample_uniform(&mut rng), Err(Error::ZeroLengthInterval));
    }

    #[test]
    fn wrap_sampling_fraction() {
        // (π/2) / π of I(3π/2, π/2) lies in [0, π/2).
        let iv = GeneralizedInterval::i(a(3.0 * FRAC_PI_2), a(FRAC_PI_2));
        let mut rng = RngStream::new(17);
        let n = 1_000_000;
        let mut hits = 0usize;
        for _ in 0..n {
            let g = iv.sample_uniform(&mut rng).unwrap();
            assert!(iv.contains(g));
            if g.radians() < FRAC_PI_2 {
                hits += 1;
            }
        }
        let p = hits as f64 / n as f64;
        let se = (0.25f64 / n as f64).sqrt();
        assert!((p - 0.5).abs() < 3.0 * se, "fraction {p}");
    }

    #[test]
    fn full_circle_sampling_is_centered() {
        let iv = GeneralizedInterval::i(a(2.0), a(2.0));
        let mut rng = RngStream::new(18);
        let n = 1_000_000;
        let mut sum = 0.0;
        for _ in 0..n {
            sum += iv.sample_uniform(&mut rng).unwrap().radians().cos();
        }
        let se = (0.5f64 / n as f64).sqrt();
        assert!((sum / n as f64).abs() < 3.0 * se);
    }

    #[test]
    fn sub_arc_cdf_matches_length_ratio() {
        let iv = GeneralizedInterval::i(a(4.0), a(2.5));
        let sub = GeneralizedInterval::i(a(6.0), a(1.0));
        let ratio = sub.length() / iv.length();
        let mut rng = RngStream::new(19);
        let n = 1_000_000;
        let hits = (0..n)
            .filter(|_| sub.contains(iv.sample_uniform(&mut rng).unwrap()))
            .count();
        let p = hits as f64 / n as f64;
        let se = (ratio * (1.0 - ratio) / n as f64).sqrt();
        assert!((p - ratio).abs() < 4.0 * se);
    }

    #[test]
    fn reflect_examples() {
        let t = a(1.3);
        assert_eq!(reflect(t, t), Angle::ZERO);
        let al = a(0.7);
        assert!((reflect(Angle::ZERO, al).radians() - (TAU - 0.7)).abs() < 1e-14);
        assert_eq!(reflect(t, reflect(t, al)), al);
    }

    #[test]
    fn reflect_interval_examples() {
        let r = reflect_interval(Angle::ZERO, GeneralizedInterval::open(a(FRAC_PI_2), a(PI))).unwrap();
        assert!((r.lo.radians() - PI).abs() < 1e-14);
        assert!((r.hi.radians() - 3.0 * FRAC_PI_2).abs() < 1e-14);
        // pointwise image on a grid of 10^4 points
        let src = GeneralizedInterval::open(a(FRAC_PI_2), a(PI));
        for k in 0..10_000u64 {
            let g = Angle::from_turns(k.wrapping_mul(0x0006_8DB8_BAC7_10CB));
            assert_eq!(src.contains(g), r.contains(reflect(Angle::ZERO, g)));
        }
        let full = GeneralizedInterval::open(a(2.0), a(2.0));
        assert!(reflect_interval(a(0.4), full).unwrap().is_full());
        assert!(reflect_interval(a(0.4), GeneralizedInterval::i(a(1.0), a(2.0))).is_err());
    }

    #[test]
    fn arcset_measure_and_sampling() {
        let s = ArcSet::from_radians(&[(0.0, FRAC_PI_2), (PI, 3.0 * FRAC_PI_2)]).unwrap();
        assert!((s.measure() - PI).abs() < 1e-14);
        assert!(s.contains(a(0.3)) && !s.contains(a(2.0)) && !s.contains(Angle::ZERO));
        let overlapping = ArcSet::from_radians(&[(0.0, 2.0), (1.0, 3.0)]).unwrap();
        assert!((overlapping.measure() - 3.0).abs() < 1e-14);
        let wrapping = ArcSet::from_radians(&[(6.0, 0.5)]).unwrap();
        assert!((wrapping.measure() - (TAU - 6.0 + 0.5)).abs() < 1e-14);
        assert!(wrapping.contains(Angle::ZERO));
        let iv = GeneralizedInterval::i(a(0.25), a(3.5));
        let within = units_to_radians(s.measure_within_units(&iv));
        assert!((within - (FRAC_PI_2 - 0.25 + 3.5 - PI)).abs() < 1e-14);
        let mut rng = RngStream::new(3);
        for _ in 0..10_000 {
            assert!(s.contains(s.sample_uniform(&mut rng).unwrap()));
        }
        assert!(ArcSet::full().covers(&s));
        assert!(!s.covers(&ArcSet::full()));
        assert!(ArcSet::new(vec![GeneralizedInterval::i(a(0.0), a(1.0))]).is_err());
    }

    fn angle_strategy() -> impl Strategy<Value = Angle> {
        prop_oneof![
            any::<u64>().prop_map(Angle::from_turns),
            (0u64..8).prop_map(|k| Angle::from_turns(k << 61)),
        ]
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(4096))]

        #[test]
        fn interval_identities((al, be, ga) in (angle_strategy(), angle_strategy(), angle_strategy())) {
            if ga != al {
                prop_assert_eq!(
                    GeneralizedInterval::i(al, be).contains(ga),
                    GeneralizedInterval::j(be, ga).contains(al)
                );
            }
            if ga != be {
                prop_assert_eq!(
                    GeneralizedInterval::j(al, be).contains(ga),
                    GeneralizedInterval::i(ga, al).contains(be)
                );
            }
        }

        #[test]
        fn complementarity((al, be, ga) in (angle_strategy(), angle_strategy(), angle_strategy())) {
            let i = GeneralizedInterval::i(al, be);
            let j = GeneralizedInterval::j(be, al);
            prop_assert_eq!(i.length_units() + j.length_units(), TURN);
            prop_assert!(i.contains(ga) != j.contains(ga));
            if al != be {
                prop_assert_eq!(i.contains(ga), GeneralizedInterval::j(al, be).contains(ga));
            }
        }

        #[test]
        fn reflection_is_an_involution((t, al) in (angle_strategy(), angle_strategy())) {
            prop_assert_eq!(reflect(t, reflect(t, al)), al);
        }

        #[test]
        fn reflected_interval_membership((t, al, be, ga) in (angle_strategy(), angle_strategy(), angle_strategy(), angle_strategy())) {
            let iv = GeneralizedInterval::open(al, be);
            let r = reflect_interval(t, iv).unwrap();
            prop_assert_eq!(r.contains(reflect(t, ga)), iv.contains(ga));
            prop_assert_eq!(r.length_units(), iv.length_units());
        }

        #[test]
        fn samples_stay_inside((al, be, seed) in (angle_strategy(), angle_strategy(), any::<u64>())) {
            let iv = GeneralizedInterval::i(al, be);
            let mut rng = RngStream::new(seed);
            for _ in 0..16 {
                prop_assert!(iv.contains(iv.sample_uniform(&mut rng).unwrap()));
            }
        }
    }
}
