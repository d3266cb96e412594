//! Subject metadata, confound-skewed training splits with balanced unseen test
//! sets, and stratified k-fold partitions.
//!
//! A split is planned as integer quotas over cells keyed by
//! `(label, gender, smoking, age decade)`. Attributes that must not carry bias
//! share one decade distribution across every stratum, so their per-class
//! histograms come out identical; members are then drawn uniformly without
//! replacement from each cell.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::ops::Range;

use crate::math;
use crate::rng::Rng;
use crate::synth::{ConfoundProfile, Gender, Smoking, AGE_BINS};
use crate::{Error, Result};

/// Decade bins below this index hold subjects under 40.
pub const YOUNG_BINS: usize = 3;
pub const DEFAULT_SKEW: f64 = 0.8;
pub const DEFAULT_TEST_PER_CLASS: usize = 100;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Label {
    Diseased,
    Normal,
}

impl Label {
    pub fn is_diseased(self) -> bool {
        self == Label::Diseased
    }

    /// 1.0 for diseased, 0.0 for normal.
    pub fn target(self) -> f64 {
        if self.is_diseased() {
            1.0
        } else {
            0.0
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Label::Diseased => "diseased",
            Label::Normal => "normal",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SubjectRecord {
    pub subject_id: String,
    pub label: Label,
    pub profile: ConfoundProfile,
    pub clip_path: String,
}

pub trait Labeled {
    fn label(&self) -> Label;
}

impl Labeled for SubjectRecord {
    fn label(&self) -> Label {
        self.label
    }
}

impl<T: Labeled> Labeled for &T {
    fn label(&self) -> Label {
        (*self).label()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BiasKind {
    Gender,
    /// Normal class skewed young, diseased class skewed old.
    AgeGroup1,
    /// Normal class skewed old, diseased class skewed young.
    AgeGroup2,
    Smoking,
    Unbiased,
}

impl BiasKind {
    pub const ALL: [BiasKind; 5] = [
        BiasKind::Gender,
        BiasKind::AgeGroup1,
        BiasKind::AgeGroup2,
        BiasKind::Smoking,
        BiasKind::Unbiased,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            BiasKind::Gender => "gender",
            BiasKind::AgeGroup1 => "age_group1",
            BiasKind::AgeGroup2 => "age_group2",
            BiasKind::Smoking => "smoking",
            BiasKind::Unbiased => "unbiased",
        }
    }

    /// Also accepts the short CLI names `age` and `none`.
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "age" => Ok(BiasKind::AgeGroup1),
            "none" => Ok(BiasKind::Unbiased),
            _ => BiasKind::ALL
                .into_iter()
                .find(|k| k.as_str() == s)
                .ok_or_else(|| Error::InvalidSpec(format!("unknown bias kind {s:?}"))),
        }
    }

    /// Per-class training size used for each scenario at full scale.
    pub fn reference_train_per_class(self) -> usize {
        match self {
            BiasKind::Gender => 925,
            BiasKind::AgeGroup1 | BiasKind::AgeGroup2 => 765,
            BiasKind::Smoking => 350,
            BiasKind::Unbiased => 900,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SplitSpec {
    pub bias_kind: BiasKind,
    pub train_per_class: usize,
    pub test_per_class: usize,
    /// Share of the over-represented attribute value within each class.
    pub skew: f64,
    pub seed: u64,
}

impl SplitSpec {
    pub fn reference(bias_kind: BiasKind, seed: u64) -> Self {
        Self {
            bias_kind,
            train_per_class: bias_kind.reference_train_per_class(),
            test_per_class: DEFAULT_TEST_PER_CLASS,
            skew: DEFAULT_SKEW,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.train_per_class == 0 || self.test_per_class == 0 {
            return Err(Error::InvalidSpec("per-class counts must be at least 1".into()));
        }
        if !(0.5..=1.0).contains(&self.skew) {
            return Err(Error::InvalidSpec(format!("skew {} outside [0.5, 1]", self.skew)));
        }
        if self.bias_kind != BiasKind::Unbiased && self.test_per_class % 2 == 1 {
            return Err(Error::InvalidSpec(format!(
                "test_per_class {} cannot be balanced across two attribute values",
                self.test_per_class
            )));
        }
        Ok(())
    }

    /// Count of the over-represented attribute value in each training class.
    pub fn majority(&self) -> usize {
        let m = math::ceil(self.skew * self.train_per_class as f64 - 1e-9) as usize;
        m.min(self.train_per_class)
    }

    pub fn minority(&self) -> usize {
        self.train_per_class - self.majority()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetSplit {
    pub train: Vec<SubjectRecord>,
    pub test: Vec<SubjectRecord>,
    pub spec: SplitSpec,
}

#[derive(Clone, Debug)]
struct Stratum {
    label: Label,
    gender: Gender,
    smoking: Smoking,
    bins: Range<usize>,
    train: usize,
    test: usize,
}

type CellKey = (Label, Gender, Smoking, usize);

fn cell_counts(pool: &[SubjectRecord], s: &Stratum) -> [usize; AGE_BINS] {
    let mut c = [0; AGE_BINS];
    for r in pool {
        if r.label == s.label && r.profile.gender == s.gender && r.profile.smoking == s.smoking {
            c[r.profile.age_bin()] += 1;
        }
    }
    c
}

fn split_pair(n: usize) -> (usize, usize) {
    let v = math::apportion(n, &[1.0, 1.0]);
    (v[0], v[1])
}

fn strata(spec: &SplitSpec, pool: &[SubjectRecord]) -> Vec<Stratum> {
    use Label::{Diseased, Normal};
    let (maj, min) = (spec.majority(), spec.minority());
    let half = spec.test_per_class / 2;
    let all = 0..AGE_BINS;
    let young = 0..YOUNG_BINS;
    let old = YOUNG_BINS..AGE_BINS;
    let st = |label, gender, smoking, bins: &Range<usize>, train, test| Stratum {
        label,
        gender,
        smoking,
        bins: bins.clone(),
        train,
        test,
    };
    match spec.bias_kind {
        BiasKind::Gender => {
            let ns = Smoking::NonSmoker;
            vec![
                st(Diseased, Gender::Male, ns, &all, maj, half),
                st(Diseased, Gender::Female, ns, &all, min, half),
                st(Normal, Gender::Female, ns, &all, maj, half),
                st(Normal, Gender::Male, ns, &all, min, half),
            ]
        }
        BiasKind::Smoking => {
            let m = Gender::Male;
            vec![
                st(Diseased, m, Smoking::NonSmoker, &all, maj, half),
                st(Diseased, m, Smoking::Smoker, &all, min, half),
                st(Normal, m, Smoking::Smoker, &all, maj, half),
                st(Normal, m, Smoking::NonSmoker, &all, min, half),
            ]
        }
        BiasKind::AgeGroup1 | BiasKind::AgeGroup2 => {
            let ns = Smoking::NonSmoker;
            let normal_young = spec.bias_kind == BiasKind::AgeGroup1;
            let (d_major, d_minor) = if normal_young { (&old, &young) } else { (&young, &old) };
            let (n_major, n_minor) = (d_minor, d_major);
            let (maj_m, maj_f) = split_pair(maj);
            let (min_m, min_f) = split_pair(min);
            let (t_m, t_f) = split_pair(half);
            let mut out = Vec::new();
            for (label, major_bins, minor_bins) in [(Diseased, d_major, d_minor), (Normal, n_major, n_minor)] {
                out.push(st(label, Gender::Male, ns, major_bins, maj_m, t_m));
                out.push(st(label, Gender::Female, ns, major_bins, maj_f, t_f));
                out.push(st(label, Gender::Male, ns, minor_bins, min_m, t_m));
                out.push(st(label, Gender::Female, ns, minor_bins, min_f, t_f));
            }
            out
        }
        BiasKind::Unbiased => {
            // common (gender, smoking) mix, limited by the scarcer class
            let combos = [
                (Gender::Male, Smoking::NonSmoker),
                (Gender::Female, Smoking::NonSmoker),
                (Gender::Male, Smoking::Smoker),
                (Gender::Female, Smoking::Smoker),
            ];
            let weights: Vec<f64> = combos
                .iter()
                .map(|&(g, s)| {
                    [Diseased, Normal]
                        .iter()
                        .map(|&l| {
                            let probe = st(l, g, s, &all, 0, 0);
                            cell_counts(pool, &probe).iter().sum::<usize>()
                        })
                        .min()
                        .unwrap_or(0) as f64
                })
                .collect();
            let train = math::apportion(spec.train_per_class, &weights);
            let test = math::apportion(spec.test_per_class, &weights);
            let mut out = Vec::new();
            for label in [Diseased, Normal] {
                for (i, &(g, s)) in combos.iter().enumerate() {
                    out.push(st(label, g, s, &all, train[i], test[i]));
                }
            }
            out
        }
    }
}

/// Builds a training set that realizes `spec.skew` on one confound together
/// with a test set where that confound is balanced within each class.
pub fn build_biased_split(pool: &[SubjectRecord], spec: &SplitSpec) -> Result<DatasetSplit> {
    spec.validate()?;
    let strata = strata(spec, pool);
    let counts: Vec<[usize; AGE_BINS]> = strata.iter().map(|s| cell_counts(pool, s)).collect();

    // Shared decade distribution per bin range.
    let mut quotas: Vec<(Vec<usize>, Vec<usize>)> = vec![(Vec::new(), Vec::new()); strata.len()];
    let mut ranges: Vec<Range<usize>> = Vec::new();
    for s in &strata {
        if !ranges.contains(&s.bins) {
            ranges.push(s.bins.clone());
        }
    }
    for range in ranges {
        let members: Vec<usize> = (0..strata.len())
            .filter(|&i| strata[i].bins == range && strata[i].train + strata[i].test > 0)
            .collect();
        let weights: Vec<f64> = range
            .clone()
            .map(|b| {
                members
                    .iter()
                    .map(|&i| counts[i][b] as f64 / (strata[i].train + strata[i].test) as f64)
                    .fold(f64::INFINITY, f64::min)
            })
            .map(|w| if w.is_finite() { w } else { 0.0 })
            .collect();
        let capacity: f64 = weights.iter().sum();
        if !members.is_empty() && capacity < 1.0 {
            let s = &strata[members[0]];
            return Err(Error::InsufficientPool(format!(
                "{} cells cannot supply the requested counts (capacity {:.3} < 1, e.g. {} {} {})",
                spec.bias_kind.as_str(),
                capacity,
                s.label.as_str(),
                s.gender.as_str(),
                s.smoking.as_str()
            )));
        }
        for &i in &members {
            quotas[i] = (
                math::apportion(strata[i].train, &weights),
                math::apportion(strata[i].test, &weights),
            );
        }
    }

    let mut rng = Rng::new(spec.seed);
    let mut train = Vec::with_capacity(2 * spec.train_per_class);
    let mut test = Vec::with_capacity(2 * spec.test_per_class);
    for (i, s) in strata.iter().enumerate() {
        let (tq, sq) = &quotas[i];
        for (k, b) in s.bins.clone().enumerate() {
            let (nt, ns) = (tq.get(k).copied().unwrap_or(0), sq.get(k).copied().unwrap_or(0));
            if nt + ns == 0 {
                continue;
            }
            let key: CellKey = (s.label, s.gender, s.smoking, b);
            let mut members: Vec<&SubjectRecord> = pool
                .iter()
                .filter(|r| (r.label, r.profile.gender, r.profile.smoking, r.profile.age_bin()) == key)
                .collect();
            if members.len() < nt + ns {
                return Err(Error::InsufficientPool(format!(
                    "cell {} {} {} age bin {b}: need {}, have {}",
                    s.label.as_str(),
                    s.gender.as_str(),
                    s.smoking.as_str(),
                    nt + ns,
                    members.len()
                )));
            }
            rng.shuffle(&mut members);
            train.extend(members[..nt].iter().map(|r| (*r).clone()));
            test.extend(members[nt..nt + ns].iter().map(|r| (*r).clone()));
        }
    }
    rng.shuffle(&mut train);
    rng.shuffle(&mut test);
    Ok(DatasetSplit { train, test, spec: *spec })
}

/// Splits `items` into `k` label-stratified folds of indices whose sizes
/// differ by at most one.
pub fn kfold_partitions<T: Labeled>(items: &[T], k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if k < 2 || items.len() < k {
        return Err(Error::InvalidK { k, n: items.len() });
    }
    let mut rng = Rng::new(seed);
    let mut order = Vec::with_capacity(items.len());
    for label in [Label::Diseased, Label::Normal] {
        let mut idx: Vec<usize> = (0..items.len()).filter(|&i| items[i].label() == label).collect();
        rng.shuffle(&mut idx);
        order.extend(idx);
    }
    let mut folds = vec![Vec::new(); k];
    for (pos, i) in order.into_iter().enumerate() {
        folds[pos % k].push(i);
    }
    Ok(folds)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{age_bin_range, subject_id};
    use proptest::prelude::*;

    #[test]
    fn bias_kind_names_round_trip_with_short_aliases() {
        for k in BiasKind::ALL {
            assert_eq!(BiasKind::parse(k.as_str()).unwrap(), k);
        }
        assert_eq!(BiasKind::parse("age").unwrap(), BiasKind::AgeGroup1);
        assert_eq!(BiasKind::parse("none").unwrap(), BiasKind::Unbiased);
        assert!(matches!(BiasKind::parse("height"), Err(Error::InvalidSpec(_))));
    }

    /// `per_bin` subjects in every (label, gender, smoking, decade) cell.
    fn grid_pool(per_bin: usize) -> Vec<SubjectRecord> {
        let mut out = Vec::new();
        for label in [Label::Diseased, Label::Normal] {
            for gender in [Gender::Male, Gender::Female] {
                for smoking in [Smoking::Smoker, Smoking::NonSmoker] {
                    for bin in 0..AGE_BINS {
                        let (lo, hi) = age_bin_range(bin);
                        for j in 0..per_bin {
                            let age = lo + (j % (hi - lo + 1) as usize) as u8;
                            let idx = out.len();
                            out.push(SubjectRecord {
                                subject_id: subject_id(idx),
                                label,
                                profile: ConfoundProfile { gender, age_years: age, smoking },
                                clip_path: String::new(),
                            });
                        }
                    }
                }
            }
        }
        out
    }

    fn count(rs: &[SubjectRecord], f: impl Fn(&SubjectRecord) -> bool) -> usize {
        rs.iter().filter(|r| f(r)).count()
    }

    fn assert_disjoint(split: &DatasetSplit) {
        let mut ids: Vec<&str> = split.train.iter().chain(&split.test).map(|r| r.subject_id.as_str()).collect();
        let n = ids.len();
        ids.sort();
        ids.dedup();
        assert_eq!(ids.len(), n, "train and test overlap");
    }

    fn age_hist(rs: &[SubjectRecord], label: Label) -> [usize; AGE_BINS] {
        let mut h = [0; AGE_BINS];
        for r in rs.iter().filter(|r| r.label == label) {
            h[r.profile.age_bin()] += 1;
        }
        h
    }

    #[test]
    fn gender_split_counts() {
        let split = build_biased_split(&grid_pool(300), &SplitSpec::reference(BiasKind::Gender, 1)).unwrap();
        let d = |r: &SubjectRecord| r.label == Label::Diseased;
        let male = |r: &SubjectRecord| r.profile.gender == Gender::Male;
        assert_eq!(count(&split.train, d), 925);
        assert_eq!(count(&split.train, |r| !d(r)), 925);
        assert_eq!(count(&split.train, |r| d(r) && male(r)), 740);
        assert_eq!(count(&split.train, |r| !d(r) && !male(r)), 740);
        assert_eq!(count(&split.test, |r| d(r) && male(r)), 50);
        assert_eq!(count(&split.test, |r| d(r) && !male(r)), 50);
        assert_eq!(count(&split.test, |r| !d(r) && male(r)), 50);
        assert!(split.train.iter().chain(&split.test).all(|r| r.profile.smoking == Smoking::NonSmoker));
        assert_eq!(age_hist(&split.train, Label::Diseased), age_hist(&split.train, Label::Normal));
        assert_disjoint(&split);
    }

    #[test]
    fn unbiased_split_counts() {
        let split = build_biased_split(&grid_pool(300), &SplitSpec::reference(BiasKind::Unbiased, 2)).unwrap();
        assert_eq!(split.train.len(), 1800);
        assert_eq!(split.test.len(), 200);
        for attr in [
            |r: &SubjectRecord| r.profile.gender == Gender::Male,
            |r: &SubjectRecord| r.profile.smoking == Smoking::Smoker,
        ] {
            let d = count(&split.train, |r| r.label == Label::Diseased && attr(r));
            let n = count(&split.train, |r| r.label == Label::Normal && attr(r));
            assert_eq!(d, n);
        }
        assert_disjoint(&split);
    }

    #[test]
    fn age_split_directions() {
        let pool = grid_pool(300);
        for (kind, normal_young) in [(BiasKind::AgeGroup1, true), (BiasKind::AgeGroup2, false)] {
            let split = build_biased_split(&pool, &SplitSpec::reference(kind, 3)).unwrap();
            let young_normals = count(&split.train, |r| r.label == Label::Normal && r.profile.is_young());
            assert_eq!(young_normals, if normal_young { 612 } else { 153 });
            let males = |l| count(&split.train, |r: &SubjectRecord| r.label == l && r.profile.gender == Gender::Male);
            assert_eq!(males(Label::Diseased), males(Label::Normal));
            for l in [Label::Diseased, Label::Normal] {
                assert_eq!(count(&split.test, |r| r.label == l && r.profile.is_young()), 50);
            }
            assert_disjoint(&split);
        }
    }

    #[test]
    fn smoking_split_is_male_only() {
        let split = build_biased_split(&grid_pool(300), &SplitSpec::reference(BiasKind::Smoking, 4)).unwrap();
        assert!(split.train.iter().chain(&split.test).all(|r| r.profile.gender == Gender::Male));
        assert_eq!(count(&split.train, |r| r.label == Label::Normal && r.profile.smoking == Smoking::Smoker), 280);
        assert_eq!(count(&split.train, |r| r.label == Label::Diseased && r.profile.smoking == Smoking::Smoker), 70);
    }

    #[test]
    fn half_skew_balances_attribute() {
        let spec = SplitSpec { skew: 0.5, train_per_class: 100, ..SplitSpec::reference(BiasKind::Gender, 5) };
        let split = build_biased_split(&grid_pool(60), &spec).unwrap();
        for l in [Label::Diseased, Label::Normal] {
            let m = count(&split.train, |r| r.label == l && r.profile.gender == Gender::Male);
            assert_eq!(m, 50);
        }
    }

    #[test]
    fn errors() {
        let pool = grid_pool(5);
        assert!(matches!(
            build_biased_split(&pool, &SplitSpec::reference(BiasKind::Gender, 1)),
            Err(Error::InsufficientPool(_))
        ));
        let bad = SplitSpec { skew: 0.4, ..SplitSpec::reference(BiasKind::Gender, 1) };
        assert!(matches!(build_biased_split(&pool, &bad), Err(Error::InvalidSpec(_))));
        let bad = SplitSpec { test_per_class: 0, ..SplitSpec::reference(BiasKind::Gender, 1) };
        assert!(matches!(build_biased_split(&pool, &bad), Err(Error::InvalidSpec(_))));
        let items = grid_pool(1);
        assert!(matches!(kfold_partitions(&items, 1, 0), Err(Error::InvalidK { .. })));
        assert!(matches!(kfold_partitions(&items[..3], 4, 0), Err(Error::InvalidK { .. })));
    }

    #[test]
    fn kfold_sizes() {
        let pool = grid_pool(30);
        let items: Vec<&SubjectRecord> = pool.iter().take(1850).collect();
        let folds = kfold_partitions(&items, 10, 7).unwrap();
        assert!(folds.iter().all(|f| f.len() == 185));
        let ten = &pool[..10];
        let folds = kfold_partitions(ten, 10, 7).unwrap();
        assert!(folds.iter().all(|f| f.len() == 1));
    }

    proptest! {
        #[test]
        fn kfold_is_a_stratified_partition(n in 2usize..300, k in 2usize..12, seed in any::<u64>()) {
            prop_assume!(n >= k);
            let pool = grid_pool(3);
            let items: Vec<&SubjectRecord> = pool.iter().cycle().take(n).collect();
            let folds = kfold_partitions(&items, k, seed).unwrap();
            prop_assert_eq!(folds.len(), k);
            let mut all: Vec<usize> = folds.iter().flatten().copied().collect();
            all.sort();
            prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
            let sizes: Vec<usize> = folds.iter().map(|f| f.len()).collect();
            prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
            let pos: Vec<usize> = folds.iter().map(|f| f.iter().filter(|&&i| items[i].label.is_diseased()).count()).collect();
            prop_assert!(pos.iter().max().unwrap() - pos.iter().min().unwrap() <= 1);
            prop_assert_eq!(folds.clone(), kfold_partitions(&items, k, seed).unwrap());
        }

        #[test]
        fn splits_hold_invariants(kind_ix in 0usize..5, skew in 0.5f64..=1.0, seed in any::<u64>(), train in 10usize..60) {
            let kind = BiasKind::ALL[kind_ix];
            let spec = SplitSpec { bias_kind: kind, train_per_class: train, test_per_class: 10, skew, seed };
            let split = build_biased_split(&grid_pool(40), &spec).unwrap();
            for l in [Label::Diseased, Label::Normal] {
                prop_assert_eq!(count(&split.train, |r| r.label == l), train);
                prop_assert_eq!(count(&split.test, |r| r.label == l), 10);
            }
            let mut ids: Vec<&str> = split.train.iter().chain(&split.test).map(|r| r.subject_id.as_str()).collect();
            let n = ids.len();
            ids.sort();
            ids.dedup();
            prop_assert_eq!(ids.len(), n);
            if matches!(kind, BiasKind::Gender | BiasKind::Smoking) {
                let a = age_hist(&split.train, Label::Diseased);
                let b = age_hist(&split.train, Label::Normal);
                for i in 0..AGE_BINS {
                    prop_assert!((a[i] as i64 - b[i] as i64).abs() <= 1);
                }
                let target = |r: &SubjectRecord| match kind {
                    BiasKind::Gender => r.profile.gender == Gender::Male,
                    _ => r.profile.smoking == Smoking::NonSmoker,
                };
                prop_assert_eq!(count(&split.train, |r| r.label == Label::Diseased && target(r)), spec.majority());
            }
        }
    }
}
