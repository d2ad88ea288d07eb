//! Tie-aware normalized ECDFs, mid/pseudo ranks and per-component rank
//! transforms.
//!
//! Ties are resolved through the normalized empirical CDF, the average of the
//! left- and right-continuous ECDFs; this is exactly the mid-rank convention.
//! Tie detection compares stored values for exact equality, so ordinal
//! categories must be encoded with consistent codes.

use crate::dataset::{Dataset, WeightingMode};
use crate::error::{NancovaError, Result};

/// Normalized empirical CDF of `sample` at `x`: (#{v < x} + #{v = x}/2) / n.
pub fn normalized_ecdf(sample: &[f64], x: f64) -> Result<f64> {
    if sample.is_empty() {
        return Err(NancovaError::InvalidInput(
            "normalized_ecdf: empty sample".into(),
        ));
    }
    if !x.is_finite() || sample.iter().any(|v| !v.is_finite()) {
        return Err(NancovaError::InvalidInput(
            "normalized_ecdf: non-finite value".into(),
        ));
    }
    let mut less = 0usize;
    let mut equal = 0usize;
    for &v in sample {
        if v < x {
            less += 1;
        } else if v == x {
            equal += 1;
        }
    }
    Ok((less as f64 + 0.5 * equal as f64) / sample.len() as f64)
}

/// Mid ranks of `values`: tied entries receive the average of the integer
/// ranks they span, so the rank sum stays N(N+1)/2.
pub fn mid_ranks(values: &[f64]) -> Result<Vec<f64>> {
    if values.is_empty() {
        return Err(NancovaError::InvalidInput("mid_ranks: empty input".into()));
    }
    if values.iter().any(|v| v.is_nan()) {
        return Err(NancovaError::InvalidInput("mid_ranks: NaN present".into()));
    }
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).unwrap());

    let mut ranks = vec![0.0; values.len()];
    let mut start = 0;
    while start < order.len() {
        let value = values[order[start]];
        let mut end = start + 1;
        while end < order.len() && values[order[end]] == value {
            end += 1;
        }
        // spanned integer ranks are start+1 ..= end
        let rank = (start + 1 + end) as f64 / 2.0;
        for &idx in &order[start..end] {
            ranks[idx] = rank;
        }
        start = end;
    }
    Ok(ranks)
}

/// Per-group sorted copies of one pooled component.
fn sorted_groups(values: &[f64], group_index: &[usize], sizes: &[usize]) -> Result<Vec<Vec<f64>>> {
    if values.len() != group_index.len() || values.len() != sizes.iter().sum::<usize>() {
        return Err(NancovaError::InvalidInput(
            "group index and sizes do not match the observations".into(),
        ));
    }
    if sizes.contains(&0) {
        return Err(NancovaError::InvalidInput(
            "group with zero members".into(),
        ));
    }
    let mut per_group: Vec<Vec<f64>> = sizes.iter().map(|&n| Vec::with_capacity(n)).collect();
    for (&v, &g) in values.iter().zip(group_index) {
        if g >= sizes.len() {
            return Err(NancovaError::InvalidInput(format!(
                "group index {g} out of range"
            )));
        }
        per_group[g].push(v);
    }
    if per_group
        .iter()
        .zip(sizes)
        .any(|(col, &n)| col.len() != n)
    {
        return Err(NancovaError::InvalidInput(
            "group sizes inconsistent with group index".into(),
        ));
    }
    for col in &mut per_group {
        col.sort_by(|a, b| a.partial_cmp(b).unwrap());
    }
    Ok(per_group)
}

/// Normalized ECDF of a sorted sample, via binary search.
fn sorted_necdf(sorted: &[f64], x: f64) -> f64 {
    let less = sorted.partition_point(|&v| v < x);
    let leq = sorted.partition_point(|&v| v <= x);
    (less as f64 + 0.5 * (leq - less) as f64) / sorted.len() as f64
}

/// Weighted average ECDF over groups at `x`.
fn average_ecdf(per_group: &[Vec<f64>], weights: &[f64], x: f64) -> f64 {
    per_group
        .iter()
        .zip(weights)
        .map(|(col, w)| w * sorted_necdf(col, x))
        .sum()
}

/// Pseudo ranks: N * H(x) + 1/2 with H the unweighted average of the
/// per-group normalized ECDFs. Equals mid ranks whenever group sizes agree.
pub fn pseudo_ranks(values: &[f64], group_index: &[usize], sizes: &[usize]) -> Result<Vec<f64>> {
    if values.iter().any(|v| v.is_nan()) {
        return Err(NancovaError::InvalidInput("pseudo_ranks: NaN present".into()));
    }
    let per_group = sorted_groups(values, group_index, sizes)?;
    let weights = WeightingMode::Unweighted.weights(sizes);
    let n = values.len() as f64;
    Ok(values
        .iter()
        .map(|&x| n * average_ecdf(&per_group, &weights, x) + 0.5)
        .collect())
}

/// Rank transforms of every component of a dataset.
///
/// Row order is group-major: the row for observation k of group i sits at
/// `offset(i) + k`. All entries are strictly inside (0, 1).
#[derive(Debug, Clone, PartialEq)]
pub struct RankFrame {
    /// One column per component, each of length N.
    columns: Vec<Vec<f64>>,
    sizes: Vec<usize>,
    offsets: Vec<usize>,
    mode: WeightingMode,
}

impl RankFrame {
    pub fn mode(&self) -> WeightingMode {
        self.mode
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn group_count(&self) -> usize {
        self.sizes.len()
    }

    /// Number of covariates d.
    pub fn covariate_count(&self) -> usize {
        self.columns.len() - 1
    }

    pub fn total_n(&self) -> usize {
        self.columns[0].len()
    }

    /// Pooled column of component r.
    pub fn column(&self, r: usize) -> &[f64] {
        &self.columns[r]
    }

    /// Rows of group i within component r.
    pub fn group_column(&self, i: usize, r: usize) -> &[f64] {
        let o = self.offsets[i];
        &self.columns[r][o..o + self.sizes[i]]
    }

    pub fn offset(&self, i: usize) -> usize {
        self.offsets[i]
    }
}

/// Compute the rank transform of every component under `mode`.
///
/// In sample-size weighted mode the transform of an observation equals
/// (mid rank - 1/2) / N over the pooled component; in unweighted mode it is
/// the unweighted average ECDF evaluated at the observation.
pub fn rank_transforms(data: &Dataset, mode: WeightingMode) -> Result<RankFrame> {
    let sizes = data.sizes();
    let n = data.total_n();
    let mut offsets = Vec::with_capacity(sizes.len());
    let mut acc = 0;
    for &s in &sizes {
        offsets.push(acc);
        acc += s;
    }

    let group_index: Vec<usize> = sizes
        .iter()
        .enumerate()
        .flat_map(|(i, &s)| std::iter::repeat_n(i, s))
        .collect();

    let mut columns = Vec::with_capacity(data.covariate_count() + 1);
    for r in 0..=data.covariate_count() {
        let values = data.pooled_component(r);
        let col = match mode {
            WeightingMode::SampleSizeWeighted => mid_ranks(&values)?
                .into_iter()
                .map(|rank| (rank - 0.5) / n as f64)
                .collect(),
            WeightingMode::Unweighted => {
                let per_group = sorted_groups(&values, &group_index, &sizes)?;
                let weights = WeightingMode::Unweighted.weights(&sizes);
                values
                    .iter()
                    .map(|&x| average_ecdf(&per_group, &weights, x))
                    .collect()
            }
        };
        columns.push(col);
    }
    Ok(RankFrame {
        columns,
        sizes,
        offsets,
        mode,
    })
}
