//! Diversity, culture-agnostic overlap, rank correlations and demographic
//! ablation rates.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::assignment::CultureSymbol;
use crate::error::{Error, Result};
use crate::roster::{Roster, TopicId};

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DiversityTable {
    sets: BTreeMap<(String, TopicId, String), BTreeSet<String>>,
}

impl DiversityTable {
    pub fn count(&self, model_id: &str, topic: TopicId, culture: &str) -> usize {
        self.sets
            .get(&(model_id.to_string(), topic, culture.to_string()))
            .map_or(0, BTreeSet::len)
    }

    pub fn symbols(&self, model_id: &str, topic: TopicId, culture: &str) -> BTreeSet<String> {
        self.sets
            .get(&(model_id.to_string(), topic, culture.to_string()))
            .cloned()
            .unwrap_or_default()
    }

    /// (model, topic, culture) → unique-symbol count, for cultures with symbols.
    pub fn entries(&self) -> impl Iterator<Item = ((&str, TopicId, &str), usize)> {
        self.sets
            .iter()
            .map(|((m, t, c), s)| ((m.as_str(), *t, c.as_str()), s.len()))
    }

    /// Counts aligned with `roster.cultures`, zero where a culture has none.
    pub fn vector(&self, model_id: &str, topic: TopicId, roster: &Roster) -> Vec<usize> {
        roster
            .cultures
            .iter()
            .map(|c| self.count(model_id, topic, &c.id))
            .collect()
    }

    /// Mean count per region over all member cultures (zeros included).
    pub fn region_means(
        &self,
        model_id: &str,
        topic: TopicId,
        roster: &Roster,
    ) -> Vec<(String, f64)> {
        roster
            .regions
            .iter()
            .filter(|r| !r.members.is_empty())
            .map(|r| {
                let total: usize = r
                    .members
                    .iter()
                    .map(|&i| self.count(model_id, topic, &roster.cultures[i].id))
                    .sum();
                (r.name.clone(), total as f64 / r.members.len() as f64)
            })
            .collect()
    }
}

/// Distinct symbol norms per (model, topic, culture).
pub fn diversity(symbols: &[CultureSymbol]) -> DiversityTable {
    let mut table = DiversityTable::default();
    for s in symbols {
        table
            .sets
            .entry((s.model_id.clone(), s.topic, s.culture.clone()))
            .or_default()
            .insert(s.symbol.clone());
    }
    table
}

/// Fraction of a culture's symbols also found among agnostic symbols.
/// `None` when the culture has no symbols.
pub fn overlap_rate(
    culture_symbols: &BTreeSet<String>,
    agnostic_symbols: &BTreeSet<String>,
) -> Option<f64> {
    if culture_symbols.is_empty() {
        return None;
    }
    let shared = culture_symbols.intersection(agnostic_symbols).count();
    Some(shared as f64 / culture_symbols.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AblationRates {
    pub hit_rate: Option<f64>,
    pub new_rate: Option<f64>,
}

/// hit = |neutral ∩ condition| / |neutral|; new = |condition \ known| / |condition|.
pub fn ablation_rates(
    condition: &BTreeSet<String>,
    neutral: &BTreeSet<String>,
    all_known: &BTreeSet<String>,
) -> AblationRates {
    let hit_rate = (!neutral.is_empty())
        .then(|| neutral.intersection(condition).count() as f64 / neutral.len() as f64);
    let new_rate = (!condition.is_empty())
        .then(|| condition.difference(all_known).count() as f64 / condition.len() as f64);
    AblationRates { hit_rate, new_rate }
}

/// Mean and population variance; `None` for an empty slice.
pub fn mean_variance(values: &[f64]) -> Option<(f64, f64)> {
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    Some((mean, var))
}

fn check_pair(x: &[f64], y: &[f64]) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::Usage(format!(
            "vector lengths differ: {} vs {}",
            x.len(),
            y.len()
        )));
    }
    if x.len() < 2 {
        return Err(Error::Usage(
            "correlation needs at least two observations".into(),
        ));
    }
    if x.iter().chain(y).any(|v| v.is_nan()) {
        return Err(Error::Usage("NaN in correlation input".into()));
    }
    Ok(())
}

fn cmp(a: f64, b: f64) -> Ordering {
    a.partial_cmp(&b).expect("NaN rejected")
}

fn tied_pairs(sorted: &[f64]) -> i64 {
    let mut total = 0i64;
    let mut run = 1i64;
    for w in sorted.windows(2) {
        if w[0] == w[1] {
            run += 1;
        } else {
            total += run * (run - 1) / 2;
            run = 1;
        }
    }
    total + run * (run - 1) / 2
}

/// Sorts `v` in place, returning the number of strict inversions.
fn merge_sort_inversions(v: &mut [f64], buf: &mut Vec<f64>) -> i64 {
    let n = v.len();
    if n < 2 {
        return 0;
    }
    let mid = n / 2;
    let mut swaps =
        merge_sort_inversions(&mut v[..mid], buf) + merge_sort_inversions(&mut v[mid..], buf);
    buf.clear();
    let (mut i, mut j) = (0, mid);
    while i < mid && j < n {
        if cmp(v[j], v[i]) == Ordering::Less {
            swaps += (mid - i) as i64;
            buf.push(v[j]);
            j += 1;
        } else {
            buf.push(v[i]);
            i += 1;
        }
    }
    buf.extend_from_slice(&v[i..mid]);
    buf.extend_from_slice(&v[j..n]);
    v.copy_from_slice(buf);
    swaps
}

/// Kendall τ-b, `(C − D) / sqrt((n0 − n1)(n0 − n2))`, by Knight's
/// O(n log n) method with exact integer pair counts.
pub fn kendall_tau_b(x: &[f64], y: &[f64]) -> Result<f64> {
    check_pair(x, y)?;
    let n = x.len() as i64;
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&a, &b| cmp(x[a], x[b]).then(cmp(y[a], y[b])));

    let xs: Vec<f64> = idx.iter().map(|&i| x[i]).collect();
    let ties_x = tied_pairs(&xs);
    let mut joint = 0i64;
    let mut run = 1i64;
    for w in idx.windows(2) {
        if x[w[0]] == x[w[1]] && y[w[0]] == y[w[1]] {
            run += 1;
        } else {
            joint += run * (run - 1) / 2;
            run = 1;
        }
    }
    joint += run * (run - 1) / 2;

    let mut ys: Vec<f64> = idx.iter().map(|&i| y[i]).collect();
    let mut buf = Vec::with_capacity(ys.len());
    let discordant = merge_sort_inversions(&mut ys, &mut buf);
    let ties_y = tied_pairs(&ys);

    let n0 = n * (n - 1) / 2;
    let c_minus_d = n0 - ties_x - ties_y + joint - 2 * discordant;
    let denom = ((n0 - ties_x) as f64 * (n0 - ties_y) as f64).sqrt();
    if denom == 0.0 {
        return Err(Error::UndefinedCorrelation("a vector is constant".into()));
    }
    Ok(c_minus_d as f64 / denom)
}

/// 1-based ranks, ties receive the average of the ranks they span.
pub fn average_ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| cmp(v[a], v[b]));
    let mut ranks = vec![0.0; v.len()];
    let mut start = 0;
    while start < idx.len() {
        let mut end = start + 1;
        while end < idx.len() && v[idx[end]] == v[idx[start]] {
            end += 1;
        }
        let avg = (start + end + 1) as f64 / 2.0;
        for &i in &idx[start..end] {
            ranks[i] = avg;
        }
        start = end;
    }
    ranks
}

pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    check_pair(x, y)?;
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::UndefinedCorrelation("a vector is constant".into()));
    }
    Ok(sxy / (sxx * syy).sqrt())
}

pub fn spearman_rho(x: &[f64], y: &[f64]) -> Result<f64> {
    check_pair(x, y)?;
    pearson(&average_ranks(x), &average_ranks(y))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Strength {
    Weak,
    WeakToModerate,
    ModerateToStrong,
}

impl Strength {
    pub fn of(tau: f64) -> Strength {
        let a = tau.abs();
        if a >= 0.26 {
            Strength::ModerateToStrong
        } else if a >= 0.06 {
            Strength::WeakToModerate
        } else {
            Strength::Weak
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Strength::Weak => "weak",
            Strength::WeakToModerate => "weak-to-moderate",
            Strength::ModerateToStrong => "moderate-to-strong",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationResult {
    pub topic: TopicId,
    pub model_id: String,
    pub tau: f64,
    pub n: usize,
    pub strength: Strength,
}

/// Kendall τ-b between per-culture diversity and co-occurrence counts,
/// aligned by culture id over `cultures`.
pub fn correlate_diversity_frequency(
    div: &DiversityTable,
    model_id: &str,
    topic: TopicId,
    cultures: &[String],
    counts: &BTreeMap<String, u64>,
) -> Result<CorrelationResult> {
    let missing: Vec<String> = cultures
        .iter()
        .filter(|c| !counts.contains_key(*c))
        .cloned()
        .collect();
    if !missing.is_empty() {
        return Err(Error::MissingCultures(missing));
    }
    let x: Vec<f64> = cultures
        .iter()
        .map(|c| div.count(model_id, topic, c) as f64)
        .collect();
    let y: Vec<f64> = cultures.iter().map(|c| counts[c] as f64).collect();
    let tau = kendall_tau_b(&x, &y)?;
    Ok(CorrelationResult {
        topic,
        model_id: model_id.to_string(),
        tau,
        n: cultures.len(),
        strength: Strength::of(tau),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn set(items: &[&str]) -> BTreeSet<String> {
        items.iter().map(|s| s.to_string()).collect()
    }

    fn sym(symbol: &str, culture: &str) -> CultureSymbol {
        CultureSymbol {
            symbol: symbol.into(),
            culture: culture.into(),
            topic: TopicId::ExerciseRoutine,
            model_id: "m".into(),
            association: Some(0.5),
            provenance_count: 1,
        }
    }

    /// Direct pair enumeration.
    fn brute_tau_b(x: &[f64], y: &[f64]) -> f64 {
        let (mut c, mut d, mut tx, mut ty) = (0i64, 0i64, 0i64, 0i64);
        for i in 0..x.len() {
            for j in i + 1..x.len() {
                let dx = x[i] - x[j];
                let dy = y[i] - y[j];
                if dx == 0.0 && dy == 0.0 {
                } else if dx == 0.0 {
                    tx += 1;
                } else if dy == 0.0 {
                    ty += 1;
                } else if (dx > 0.0) == (dy > 0.0) {
                    c += 1;
                } else {
                    d += 1;
                }
            }
        }
        (c - d) as f64 / (((c + d + tx) as f64) * ((c + d + ty) as f64)).sqrt()
    }

    #[test]
    fn diversity_counts_with_multi_assignment() {
        let t = diversity(&[
            sym("qi gong", "china"),
            sym("qi gong", "taiwan"),
            sym("tai chi", "china"),
            sym("tai chi", "china"),
        ]);
        assert_eq!(t.count("m", TopicId::ExerciseRoutine, "china"), 2);
        assert_eq!(t.count("m", TopicId::ExerciseRoutine, "taiwan"), 1);
        assert_eq!(t.count("m", TopicId::ExerciseRoutine, "japan"), 0);
        assert_eq!(diversity(&[]).entries().count(), 0);
    }

    #[test]
    fn overlap_examples() {
        let a = set(&["a", "b", "c", "d"]);
        assert_eq!(overlap_rate(&a, &a), Some(1.0));
        assert_eq!(overlap_rate(&a, &set(&["x"])), Some(0.0));
        assert_eq!(overlap_rate(&a, &set(&["b", "d", "e"])), Some(0.5));
        assert_eq!(overlap_rate(&set(&[]), &a), None);
    }

    #[test]
    fn ablation_examples() {
        let n = set(&["a", "b", "c", "d"]);
        let r = ablation_rates(&n, &n, &n);
        assert_eq!((r.hit_rate, r.new_rate), (Some(1.0), Some(0.0)));
        let r = ablation_rates(&set(&["x", "y"]), &n, &n);
        assert_eq!(r.new_rate, Some(1.0));
        let r = ablation_rates(&set(&["a", "b", "e"]), &n, &n);
        assert_eq!(r.hit_rate, Some(0.5));
        assert_eq!(r.new_rate, Some(1.0 / 3.0));
        let r = ablation_rates(&set(&[]), &set(&[]), &n);
        assert_eq!((r.hit_rate, r.new_rate), (None, None));
    }

    #[test]
    fn tau_trivial_and_tied() {
        assert_eq!(
            kendall_tau_b(&[1.0, 2.0, 3.0], &[10.0, 20.0, 30.0]).unwrap(),
            1.0
        );
        assert_eq!(
            kendall_tau_b(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap(),
            -1.0
        );
        let x = [1.0, 2.0, 2.0, 3.0];
        let y = [1.0, 3.0, 2.0, 4.0];
        // C = 5, D = 0, tx = 1, ty = 0 → 5 / sqrt(6 * 5)
        let expected = 5.0 / 30f64.sqrt();
        assert!((brute_tau_b(&x, &y) - expected).abs() < 1e-15);
        assert!((kendall_tau_b(&x, &y).unwrap() - expected).abs() <= 1e-12);
        assert!(matches!(
            kendall_tau_b(&[2.0, 2.0], &[1.0, 3.0]),
            Err(Error::UndefinedCorrelation(_))
        ));
        assert!(kendall_tau_b(&[1.0], &[1.0]).is_err());
        assert!(kendall_tau_b(&[1.0, 2.0], &[1.0]).is_err());
    }

    #[test]
    fn ranks_and_spearman() {
        assert_eq!(
            average_ranks(&[10.0, 20.0, 20.0, 5.0]),
            [2.0, 3.5, 3.5, 1.0]
        );
        assert_eq!(
            spearman_rho(&[1.0, 2.0, 3.0], &[1.0, 4.0, 9.0]).unwrap(),
            1.0
        );
        assert_eq!(
            spearman_rho(&[1.0, 2.0, 3.0], &[9.0, 4.0, 1.0]).unwrap(),
            -1.0
        );
        assert!(matches!(
            spearman_rho(&[1.0, 1.0], &[1.0, 2.0]),
            Err(Error::UndefinedCorrelation(_))
        ));
    }

    #[test]
    fn strength_bands() {
        assert_eq!(Strength::of(0.35), Strength::ModerateToStrong);
        assert_eq!(Strength::of(-0.30), Strength::ModerateToStrong);
        assert_eq!(Strength::of(-0.26), Strength::ModerateToStrong);
        assert_eq!(Strength::of(0.10), Strength::WeakToModerate);
        assert_eq!(Strength::of(0.03), Strength::Weak);
        assert_eq!(Strength::of(1.0), Strength::ModerateToStrong);
    }

    #[test]
    fn correlation_alignment() {
        let syms = [
            sym("a", "c1"),
            sym("b", "c1"),
            sym("c", "c1"),
            sym("a", "c2"),
            sym("b", "c2"),
            sym("a", "c3"),
        ];
        let div = diversity(&syms);
        let cultures: Vec<String> = ["c1", "c2", "c3", "c4", "c5"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        let counts: BTreeMap<String, u64> =
            [("c1", 50), ("c2", 40), ("c3", 45), ("c4", 1), ("c5", 1)]
                .iter()
                .map(|(c, n)| (c.to_string(), *n))
                .collect();
        let r =
            correlate_diversity_frequency(&div, "m", TopicId::ExerciseRoutine, &cultures, &counts)
                .unwrap();
        let x = [3.0, 2.0, 1.0, 0.0, 0.0];
        let y = [50.0, 40.0, 45.0, 1.0, 1.0];
        assert!((r.tau - brute_tau_b(&x, &y)).abs() <= 1e-12);
        assert_eq!(r.n, 5);

        let same: BTreeMap<String, u64> = [("c1", 3), ("c2", 2), ("c3", 1), ("c4", 0), ("c5", 0)]
            .iter()
            .map(|(c, n)| (c.to_string(), *n))
            .collect();
        let r =
            correlate_diversity_frequency(&div, "m", TopicId::ExerciseRoutine, &cultures, &same)
                .unwrap();
        assert_eq!(r.tau, 1.0);
        assert_eq!(r.strength, Strength::ModerateToStrong);

        let mut partial = counts.clone();
        partial.remove("c4");
        match correlate_diversity_frequency(
            &div,
            "m",
            TopicId::ExerciseRoutine,
            &cultures,
            &partial,
        ) {
            Err(Error::MissingCultures(ids)) => assert_eq!(ids, ["c4"]),
            other => panic!("{other:?}"),
        }
    }

    proptest! {
        #[test]
        fn tau_symmetry_monotone_and_negation(
            pairs in prop::collection::vec((0u8..6, 0u8..6), 2..40)
        ) {
            let x: Vec<f64> = pairs.iter().map(|p| p.0 as f64).collect();
            let y: Vec<f64> = pairs.iter().map(|p| p.1 as f64).collect();
            match kendall_tau_b(&x, &y) {
                Ok(t) => {
                    prop_assert!((t - brute_tau_b(&x, &y)).abs() <= 1e-12);
                    prop_assert!((t - kendall_tau_b(&y, &x).unwrap()).abs() <= 1e-12);
                    let cubed: Vec<f64> = x.iter().map(|v| v * v * v + 3.0).collect();
                    prop_assert!((t - kendall_tau_b(&cubed, &y).unwrap()).abs() <= 1e-12);
                    let neg: Vec<f64> = y.iter().map(|v| -v).collect();
                    prop_assert!((t + kendall_tau_b(&x, &neg).unwrap()).abs() <= 1e-12);
                }
                Err(e) => prop_assert!(matches!(e, Error::UndefinedCorrelation(_))),
            }
        }

        #[test]
        fn diversity_of_union_is_distinct_count(
            items in prop::collection::vec((0u8..5, 0u8..3), 0..40),
            split in 0usize..40
        ) {
            let syms: Vec<CultureSymbol> = items
                .iter()
                .map(|(s, c)| sym(&format!("s{s}"), &format!("c{c}")))
                .collect();
            let cut = split.min(syms.len());
            let (a, b) = syms.split_at(cut);
            let whole = diversity(&syms);
            let (da, db) = (diversity(a), diversity(b));
            for c in 0..3 {
                let c = format!("c{c}");
                let union: BTreeSet<String> = da
                    .symbols("m", TopicId::ExerciseRoutine, &c)
                    .union(&db.symbols("m", TopicId::ExerciseRoutine, &c))
                    .cloned()
                    .collect();
                prop_assert_eq!(whole.count("m", TopicId::ExerciseRoutine, &c), union.len());
            }
        }

        #[test]
        fn rates_in_unit_interval(
            cond in prop::collection::btree_set(0u8..10, 0..8),
            neutral in prop::collection::btree_set(0u8..10, 0..8),
            extra in prop::collection::btree_set(0u8..10, 0..8),
        ) {
            let s = |v: &BTreeSet<u8>| v.iter().map(|x| x.to_string()).collect::<BTreeSet<_>>();
            let known: BTreeSet<String> = s(&neutral).union(&s(&extra)).cloned().collect();
            let r = ablation_rates(&s(&cond), &s(&neutral), &known);
            for v in [r.hit_rate, r.new_rate, overlap_rate(&s(&cond), &s(&neutral))].into_iter().flatten() {
                prop_assert!((0.0..=1.0).contains(&v));
            }
        }
    }
}
