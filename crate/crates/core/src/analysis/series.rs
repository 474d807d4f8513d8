//! Running selection shares over a task sequence.

use crate::domain::AuctionRecord;

/// Element `n - 1` is the fraction of the first `n` tasks won by `agent`.
/// Records are taken in `sequence_index` order whatever their slice order.
pub fn cumulative_selection(records: &[AuctionRecord], agent: &str) -> Vec<f64> {
    let mut ordered: Vec<&AuctionRecord> = records.iter().collect();
    ordered.sort_by_key(|r| r.sequence_index);
    running_share(ordered.iter().map(|r| r.final_winner == agent))
}

pub fn running_share(hits: impl IntoIterator<Item = bool>) -> Vec<f64> {
    let mut count = 0usize;
    hits.into_iter()
        .enumerate()
        .map(|(i, hit)| {
            count += hit as usize;
            count as f64 / (i + 1) as f64
        })
        .collect()
}

/// Pointwise mean of equally long series.
pub fn mean_series(series: &[Vec<f64>]) -> Vec<f64> {
    let Some(len) = series.iter().map(Vec::len).min() else {
        return Vec::new();
    };
    (0..len)
        .map(|i| series.iter().map(|s| s[i]).sum::<f64>() / series.len() as f64)
        .collect()
}
