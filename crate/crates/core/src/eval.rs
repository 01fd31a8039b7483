//! Retrieval metrics: average precision at a cutoff, mAP, and
//! precision–scope curves. Two images are relevant to each other iff they
//! share a landmark label.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::search::{query, PackedCodes};

pub const DEFAULT_CUTOFF: usize = 100;

/// Scopes 100, 200, …, 1000.
pub fn default_scopes() -> Vec<usize> {
    (1..=10).map(|s| s * 100).collect()
}

/// Same-label relevance.
#[derive(Debug, Clone, Copy, Default)]
pub struct RelevanceJudge;

impl RelevanceJudge {
    #[inline]
    pub fn relevant(&self, a: u32, b: u32) -> bool {
        a == b
    }
}

/// One query's ranked retrieval, as labels of the returned items.
#[derive(Debug, Clone, PartialEq)]
pub struct RankedQuery {
    pub query_label: u32,
    pub ranked_labels: Vec<u32>,
}

/// `AP = (1/NR) Σ_{r ≤ R} pre(r) rel(r)`, where `NR` counts relevant items in
/// the top `R`. Zero when nothing relevant is retrieved.
pub fn average_precision(ranked_labels: &[u32], query_label: u32, cutoff: usize) -> Result<f64> {
    if ranked_labels.is_empty() {
        return Err(Error::invalid("empty ranking"));
    }
    if cutoff == 0 || cutoff > ranked_labels.len() {
        return Err(Error::invalid(format!(
            "cutoff {cutoff} outside ranking of length {}",
            ranked_labels.len()
        )));
    }
    let judge = RelevanceJudge;
    let mut hits = 0usize;
    let mut acc = 0.0;
    for (r, &l) in ranked_labels[..cutoff].iter().enumerate() {
        if judge.relevant(l, query_label) {
            hits += 1;
            acc += hits as f64 / (r + 1) as f64;
        }
    }
    Ok(if hits == 0 { 0.0 } else { acc / hits as f64 })
}

/// Per-query AP and their mean. Rankings shorter than `cutoff` are scored at
/// their own length.
pub fn mean_ap(results: &[RankedQuery], cutoff: usize) -> Result<(f64, Vec<f64>)> {
    if results.is_empty() {
        return Err(Error::invalid("mAP needs at least one query"));
    }
    let per: Vec<f64> = results
        .iter()
        .map(|q| average_precision(&q.ranked_labels, q.query_label, cutoff.min(q.ranked_labels.len())))
        .collect::<Result<_>>()?;
    Ok((per.iter().sum::<f64>() / per.len() as f64, per))
}

/// Mean over queries of the fraction of relevant items in the top `s`.
pub fn precision_scope(results: &[RankedQuery], scopes: &[usize]) -> Result<Vec<(usize, f64)>> {
    if results.is_empty() {
        return Err(Error::invalid("precision needs at least one query"));
    }
    let judge = RelevanceJudge;
    scopes
        .iter()
        .map(|&s| {
            if s == 0 {
                return Err(Error::invalid("scope must be at least 1"));
            }
            let mut total = 0.0;
            for q in results {
                if s > q.ranked_labels.len() {
                    return Err(Error::invalid(format!(
                        "scope {s} exceeds the {} ranked items",
                        q.ranked_labels.len()
                    )));
                }
                let rel = q.ranked_labels[..s]
                    .iter()
                    .filter(|&&l| judge.relevant(l, q.query_label))
                    .count();
                total += rel as f64 / s as f64;
            }
            Ok((s, total / results.len() as f64))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct ConfigEcho {
    pub method: String,
    pub c: usize,
    #[serde(rename = "T")]
    pub t: usize,
    pub r: usize,
    pub seeds: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub map: f64,
    pub cutoff: usize,
    pub precision_at: BTreeMap<usize, f64>,
    pub per_query_ap: Vec<f64>,
    pub config: ConfigEcho,
}

/// Rank the database for every query code and score the rankings. Scopes
/// larger than the database are skipped.
pub fn evaluate_codes(
    database: &PackedCodes,
    database_labels: &[u32],
    queries: &PackedCodes,
    query_labels: &[u32],
    cutoff: usize,
    scopes: &[usize],
    config: ConfigEcho,
) -> Result<MetricReport> {
    if database.len() != database_labels.len() || queries.len() != query_labels.len() {
        return Err(Error::invalid("label count does not match code count"));
    }
    if database.bits() != queries.bits() {
        return Err(Error::DimensionMismatch {
            context: "query vs database code length",
            expected: database.bits(),
            found: queries.bits(),
        });
    }
    let scopes: Vec<usize> = scopes.iter().copied().filter(|&s| s <= database.len()).collect();
    let depth = scopes
        .iter()
        .copied()
        .max()
        .unwrap_or(0)
        .max(cutoff)
        .min(database.len());
    let ranked: Vec<Result<RankedQuery>> = crate::par::map_indices(queries.len(), |i| {
        let res = query(database, queries.code(i), depth)?;
        Ok(RankedQuery {
            query_label: query_labels[i],
            ranked_labels: res.hits.iter().map(|h| database_labels[h.id]).collect(),
        })
    });
    let ranked: Vec<RankedQuery> = ranked.into_iter().collect::<Result<_>>()?;
    let (map, per_query_ap) = mean_ap(&ranked, cutoff)?;
    let precision_at = precision_scope(&ranked, &scopes)?.into_iter().collect();
    Ok(MetricReport {
        map,
        cutoff,
        precision_at,
        per_query_ap,
        config,
    })
}

/// Rows `(method, c, seed, mAP)`.
pub fn write_map_csv<W: Write>(w: W, rows: &[(String, usize, u64, f64)]) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["method", "c", "seed", "mAP"])?;
    for (m, c, s, v) in rows {
        wr.write_record([m.clone(), c.to_string(), s.to_string(), format!("{v:.6}")])?;
    }
    wr.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

/// Rows `(method, c, scope, precision)`.
pub fn write_scope_csv<W: Write>(w: W, rows: &[(String, usize, usize, f64)]) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["method", "c", "scope", "precision"])?;
    for (m, c, s, v) in rows {
        wr.write_record([m.clone(), c.to_string(), s.to_string(), format!("{v:.6}")])?;
    }
    wr.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_example() {
        // rel, irrel, rel with R = 3: (1/2)(1 + 2/3) = 5/6
        let ap = average_precision(&[1, 2, 1], 1, 3).unwrap();
        assert!((ap - 5.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn extremes() {
        assert_eq!(average_precision(&[4, 4, 4, 9], 4, 3).unwrap(), 1.0);
        assert_eq!(average_precision(&[1, 2, 3], 7, 3).unwrap(), 0.0);
        assert!(average_precision(&[], 1, 1).is_err());
        assert!(average_precision(&[1], 1, 2).is_err());
    }

    #[test]
    fn mean_of_queries() {
        let q = |l: u32, r: Vec<u32>| RankedQuery {
            query_label: l,
            ranked_labels: r,
        };
        let (m, per) = mean_ap(&[q(1, vec![1, 2])], 2).unwrap();
        assert_eq!(m, per[0]);
        let (m, _) = mean_ap(&[q(1, vec![1, 1]), q(2, vec![1, 1])], 2).unwrap();
        assert_eq!(m, 0.5);
        assert!(mean_ap(&[], 10).is_err());
    }

    #[test]
    fn scope_counts() {
        let q = RankedQuery {
            query_label: 3,
            ranked_labels: vec![3, 1, 3, 3, 2],
        };
        let p = precision_scope(std::slice::from_ref(&q), &[1, 2, 4, 5]).unwrap();
        assert_eq!(p, vec![(1, 1.0), (2, 0.5), (4, 0.75), (5, 0.6)]);
        assert!(precision_scope(&[q], &[6]).is_err());
    }

    #[test]
    fn oracle_and_anti_oracle() {
        let good = RankedQuery {
            query_label: 1,
            ranked_labels: [vec![1; 120], vec![2; 200]].concat(),
        };
        let bad = RankedQuery {
            query_label: 1,
            ranked_labels: [vec![2; 200], vec![1; 120]].concat(),
        };
        assert_eq!(mean_ap(&[good], 100).unwrap().0, 1.0);
        assert_eq!(mean_ap(&[bad], 100).unwrap().0, 0.0);
    }

    #[test]
    fn csv_headers() {
        let mut buf = Vec::new();
        write_map_csv(&mut buf, &[("cvdmh".into(), 32, 1, 0.5)]).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "method,c,seed,mAP\ncvdmh,32,1,0.500000\n"
        );
        let mut buf = Vec::new();
        write_scope_csv(&mut buf, &[("cvdmh".into(), 32, 100, 0.25)]).unwrap();
        assert!(String::from_utf8(buf)
            .unwrap()
            .starts_with("method,c,scope,precision\n"));
    }
}
