//! Parameter estimation and descriptive statistics over a corpus.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::corpus::{Channel, Corpus, Feature, Features, ParentKind, Stance};
use crate::error::{Error, Result};
use crate::fmt::{fixed6, round6};
use crate::meanfield::ModelParams;

/// Two-sided 95% standard normal quantile.
const Z95: f64 = 1.959_963_984_540_054;

/// A relative frequency with its 95% Wilson score interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub point: f64,
    pub numerator: u64,
    pub denominator: u64,
    pub ci_low: f64,
    pub ci_high: f64,
}

impl Estimate {
    pub fn wilson(numerator: u64, denominator: u64) -> Self {
        if denominator == 0 {
            return Self {
                point: 0.0,
                numerator,
                denominator,
                ci_low: 0.0,
                ci_high: 1.0,
            };
        }
        let n = denominator as f64;
        let p = numerator as f64 / n;
        let z2 = Z95 * Z95;
        let scale = 1.0 + z2 / n;
        let center = (p + z2 / (2.0 * n)) / scale;
        let half = Z95 / scale * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt();
        Self {
            point: p,
            numerator,
            denominator,
            ci_low: (center - half).max(0.0).min(p),
            ci_high: (center + half).min(1.0).max(p),
        }
    }

    pub fn half_width(&self) -> f64 {
        (self.ci_high - self.ci_low) / 2.0
    }
}

pub fn estimate_alpha(c: &Corpus) -> Result<Estimate> {
    if c.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let replies = c
        .records()
        .iter()
        .filter(|r| r.parent_kind == ParentKind::Comment)
        .count();
    Ok(Estimate::wilson(replies as u64, c.len() as u64))
}

pub const CLASS_REPLY_POST: &str = "reply-to-post";
pub const CLASS_REPLY_AGGR: &str = "reply-to-aggressive-comment";
pub const CLASS_REPLY_NONAGGR: &str = "reply-to-non-aggressive-comment";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelEstimate {
    pub channel: Channel,
    pub params: ModelParams,
    pub alpha: Estimate,
    pub p_reply_post: Estimate,
    pub p_reply_aggr: Estimate,
    pub p_reply_nonaggr: Estimate,
    /// Comment replies whose parent labels could not be resolved; they
    /// count toward alpha but not toward the conditional frequencies.
    pub unresolved_parents: usize,
}

/// Conditional frequencies of the channel flag by parent class. Raw
/// maximum-likelihood ratios, no smoothing.
pub fn estimate_channel(c: &Corpus, channel: Channel) -> Result<ChannelEstimate> {
    let alpha = estimate_alpha(c)?;
    // [aggressive, total] per class
    let mut post = [0u64; 2];
    let mut aggr = [0u64; 2];
    let mut nonaggr = [0u64; 2];
    let mut unresolved = 0;
    for r in c.records() {
        let hit = channel.flag(&r.features) as u64;
        let class = match r.parent_kind {
            ParentKind::Post => &mut post,
            ParentKind::Comment => match c.parent_features(r) {
                Some(pf) if channel.flag(&pf) => &mut aggr,
                Some(_) => &mut nonaggr,
                None => {
                    unresolved += 1;
                    continue;
                }
            },
        };
        class[0] += hit;
        class[1] += 1;
    }
    for (counts, name) in [
        (post, CLASS_REPLY_POST),
        (aggr, CLASS_REPLY_AGGR),
        (nonaggr, CLASS_REPLY_NONAGGR),
    ] {
        if counts[1] == 0 {
            return Err(Error::EmptyClass(name));
        }
    }
    let p_reply_post = Estimate::wilson(post[0], post[1]);
    let p_reply_aggr = Estimate::wilson(aggr[0], aggr[1]);
    let p_reply_nonaggr = Estimate::wilson(nonaggr[0], nonaggr[1]);
    Ok(ChannelEstimate {
        channel,
        params: ModelParams {
            alpha: alpha.point,
            p_reply_post: p_reply_post.point,
            p_reply_aggr: p_reply_aggr.point,
            p_reply_nonaggr: p_reply_nonaggr.point,
        },
        alpha,
        p_reply_post,
        p_reply_aggr,
        p_reply_nonaggr,
        unresolved_parents: unresolved,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginalEntry {
    pub feature: String,
    pub count: u64,
    pub share: f64,
}

/// Share of records carrying each label, stance split by class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginalReport {
    pub total: u64,
    pub entries: Vec<MarginalEntry>,
}

pub const OVERALL_AGGRESSION: &str = "overall_aggression";

impl MarginalReport {
    pub fn share(&self, feature: &str) -> Option<f64> {
        self.entries
            .iter()
            .find(|e| e.feature == feature)
            .map(|e| e.share)
    }

    pub fn count(&self, feature: &str) -> Option<u64> {
        self.entries
            .iter()
            .find(|e| e.feature == feature)
            .map(|e| e.count)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["feature", "count", "share"])?;
        w.write_record(["total".to_string(), self.total.to_string(), fixed6(1.0)])?;
        for e in &self.entries {
            w.write_record([e.feature.clone(), e.count.to_string(), fixed6(e.share)])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(input);
        let mut total = 0;
        let mut entries = Vec::new();
        for (i, row) in r.deserialize::<MarginalEntry>().enumerate() {
            let e = row.map_err(|e| Error::Row {
                row: i + 1,
                field: "feature,count,share".into(),
                message: e.to_string(),
            })?;
            if e.feature == "total" {
                total = e.count;
            } else {
                entries.push(e);
            }
        }
        Ok(Self { total, entries })
    }

    pub fn to_json(&self) -> String {
        let rounded = Self {
            total: self.total,
            entries: self
                .entries
                .iter()
                .map(|e| MarginalEntry {
                    share: round6(e.share),
                    ..e.clone()
                })
                .collect(),
        };
        serde_json::to_string_pretty(&rounded).expect("plain struct serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

pub fn marginal_distribution(c: &Corpus) -> Result<MarginalReport> {
    if c.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let total = c.len() as u64;
    let count = |pred: &dyn Fn(&Features) -> bool| {
        c.records().iter().filter(|r| pred(&r.features)).count() as u64
    };
    let mut counts: Vec<(String, u64)> = Stance::ALL
        .iter()
        .map(|&s| {
            let label = match s {
                Stance::Against => "stance_against",
                Stance::For => "stance_for",
                Stance::Unclear => "stance_unclear",
            };
            (label.to_string(), count(&|f| f.stance == s))
        })
        .collect();
    counts.push(("logic".into(), count(&|f| f.logic)));
    counts.push(("experience".into(), count(&|f| f.experience)));
    counts.push(("hate".into(), count(&|f| f.hate)));
    counts.push(("aggr_opponent".into(), count(&|f| f.aggr_opponent)));
    counts.push(("aggr_other".into(), count(&|f| f.aggr_other)));
    counts.push((
        OVERALL_AGGRESSION.into(),
        count(&|f| f.aggr_opponent || f.aggr_other),
    ));
    Ok(MarginalReport {
        total,
        entries: counts
            .into_iter()
            .map(|(feature, n)| MarginalEntry {
                feature,
                count: n,
                share: n as f64 / total as f64,
            })
            .collect(),
    })
}

/// A label of the record itself or of its parent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FeatureRef {
    pub feature: Feature,
    pub parent: bool,
}

impl FeatureRef {
    pub fn own(feature: Feature) -> Self {
        Self {
            feature,
            parent: false,
        }
    }

    pub fn parent(feature: Feature) -> Self {
        Self {
            feature,
            parent: true,
        }
    }

    /// The six own labels followed by the six parent labels.
    pub fn all() -> Vec<FeatureRef> {
        Feature::ALL
            .into_iter()
            .map(Self::own)
            .chain(Feature::ALL.into_iter().map(Self::parent))
            .collect()
    }

    pub fn name(&self) -> String {
        if self.parent {
            format!("{}_p", self.feature.name())
        } else {
            self.feature.name().to_string()
        }
    }

    fn level(&self, c: &Corpus, r: &crate::corpus::CommentRecord) -> Option<usize> {
        if self.parent {
            c.parent_features(r).map(|f| f.level(self.feature))
        } else {
            Some(r.features.level(self.feature))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContingencyTable {
    pub row_feature: String,
    pub col_feature: String,
    pub row_labels: Vec<String>,
    pub col_labels: Vec<String>,
    pub counts: Vec<Vec<u64>>,
    pub n: u64,
    /// Records left out because a parent label was unavailable.
    pub excluded: u64,
}

impl ContingencyTable {
    /// Table from raw counts with numeric labels.
    pub fn from_counts(counts: Vec<Vec<u64>>) -> Self {
        let rows = counts.len();
        let cols = counts.first().map_or(0, Vec::len);
        let n = counts.iter().flatten().sum();
        Self {
            row_feature: "a".into(),
            col_feature: "b".into(),
            row_labels: (0..rows).map(|i| i.to_string()).collect(),
            col_labels: (0..cols).map(|j| j.to_string()).collect(),
            counts,
            n,
            excluded: 0,
        }
    }
}

pub fn contingency(c: &Corpus, a: FeatureRef, b: FeatureRef) -> Result<ContingencyTable> {
    let mut counts = vec![vec![0u64; b.feature.levels()]; a.feature.levels()];
    let mut usable = 0u64;
    for r in c.records() {
        if let (Some(i), Some(j)) = (a.level(c, r), b.level(c, r)) {
            counts[i][j] += 1;
            usable += 1;
        }
    }
    let excluded = c.len() as u64 - usable;
    if usable < 2 {
        return Err(Error::TooFewRecords {
            usable: usable as usize,
            excluded: excluded as usize,
        });
    }
    Ok(ContingencyTable {
        row_feature: a.name(),
        col_feature: b.name(),
        row_labels: a.feature.level_labels(),
        col_labels: b.feature.level_labels(),
        counts,
        n: usable,
        excluded,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CramersV {
    pub value: f64,
    /// Set when a variable is constant once empty rows and columns are dropped.
    pub degenerate: bool,
}

/// Cramér's V from Pearson's chi-square, computed after dropping empty
/// rows and columns.
pub fn cramers_v(t: &ContingencyTable) -> CramersV {
    let rows: Vec<&Vec<u64>> = t
        .counts
        .iter()
        .filter(|r| r.iter().sum::<u64>() > 0)
        .collect();
    let cols = t.counts.first().map_or(0, Vec::len);
    let keep: Vec<usize> = (0..cols)
        .filter(|&j| t.counts.iter().map(|r| r[j]).sum::<u64>() > 0)
        .collect();
    let (r, k) = (rows.len(), keep.len());
    if r < 2 || k < 2 {
        return CramersV {
            value: 0.0,
            degenerate: true,
        };
    }

    let row_sums: Vec<f64> = rows
        .iter()
        .map(|row| row.iter().sum::<u64>() as f64)
        .collect();
    let col_sums: Vec<f64> = keep
        .iter()
        .map(|&j| rows.iter().map(|row| row[j]).sum::<u64>() as f64)
        .collect();
    let n: f64 = row_sums.iter().sum();
    let mut chi2 = 0.0;
    for (row, rs) in rows.iter().zip(&row_sums) {
        for (&j, cs) in keep.iter().zip(&col_sums) {
            let expected = rs * cs / n;
            let diff = row[j] as f64 - expected;
            chi2 += diff * diff / expected;
        }
    }
    let dof = (r.min(k) - 1) as f64;
    CramersV {
        value: (chi2 / (n * dof)).sqrt().clamp(0.0, 1.0),
        degenerate: false,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairAssociation {
    pub a: String,
    pub b: String,
    pub value: f64,
    pub degenerate: bool,
    pub usable: u64,
    pub excluded: u64,
    /// Raw table, absent when too few records were usable.
    pub table: Option<ContingencyTable>,
}

/// Pairwise Cramér's V over the twelve own and parent labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssociationMatrix {
    pub features: Vec<String>,
    pub values: Vec<Vec<f64>>,
    pub degenerate: Vec<Vec<bool>>,
    /// Upper triangle including the diagonal, row-major.
    pub pairs: Vec<PairAssociation>,
}

impl AssociationMatrix {
    pub fn index(&self, feature: &str) -> Option<usize> {
        self.features.iter().position(|f| f == feature)
    }

    pub fn value(&self, a: &str, b: &str) -> Option<f64> {
        Some(self.values[self.index(a)?][self.index(b)?])
    }

    pub fn is_degenerate(&self, a: &str, b: &str) -> Option<bool> {
        Some(self.degenerate[self.index(a)?][self.index(b)?])
    }

    /// Square matrix with a header row and column of feature names.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["feature".to_string()];
        header.extend(self.features.iter().cloned());
        w.write_record(&header)?;
        for (name, row) in self.features.iter().zip(&self.values) {
            let mut rec = vec![name.clone()];
            rec.extend(row.iter().map(|&v| fixed6(v)));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads the square CSV back into feature names and values.
    pub fn read_csv_values<R: Read>(input: R) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
        let mut r = csv::Reader::from_reader(input);
        let features: Vec<String> = r.headers()?.iter().skip(1).map(str::to_owned).collect();
        let mut values = Vec::new();
        for (i, rec) in r.records().enumerate() {
            let rec = rec?;
            let row = rec
                .iter()
                .skip(1)
                .map(|cell| {
                    cell.parse::<f64>().map_err(|e| Error::Row {
                        row: i + 1,
                        field: rec[0].to_string(),
                        message: e.to_string(),
                    })
                })
                .collect::<Result<Vec<f64>>>()?;
            values.push(row);
        }
        Ok((features, values))
    }

    /// Long format: one line per unordered pair with flags and counts.
    pub fn write_pairs_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["a", "b", "value", "degenerate", "usable", "excluded"])?;
        for p in &self.pairs {
            w.write_record([
                p.a.clone(),
                p.b.clone(),
                fixed6(p.value),
                (p.degenerate as u8).to_string(),
                p.usable.to_string(),
                p.excluded.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_json(&self) -> String {
        let mut rounded = self.clone();
        for row in &mut rounded.values {
            for v in row {
                *v = round6(*v);
            }
        }
        for p in &mut rounded.pairs {
            p.value = round6(p.value);
        }
        serde_json::to_string_pretty(&rounded).expect("plain struct serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

pub fn association_matrix(c: &Corpus) -> AssociationMatrix {
    let refs = FeatureRef::all();
    let m = refs.len();
    let mut values = vec![vec![0.0; m]; m];
    let mut degenerate = vec![vec![false; m]; m];
    let mut pairs = Vec::with_capacity(m * (m + 1) / 2);
    for i in 0..m {
        for j in i..m {
            let (pair, v) = match contingency(c, refs[i], refs[j]) {
                Ok(table) => {
                    let v = cramers_v(&table);
                    (
                        PairAssociation {
                            a: refs[i].name(),
                            b: refs[j].name(),
                            value: v.value,
                            degenerate: v.degenerate,
                            usable: table.n,
                            excluded: table.excluded,
                            table: Some(table),
                        },
                        v,
                    )
                }
                Err(Error::TooFewRecords { usable, excluded }) => {
                    let v = CramersV {
                        value: 0.0,
                        degenerate: true,
                    };
                    (
                        PairAssociation {
                            a: refs[i].name(),
                            b: refs[j].name(),
                            value: 0.0,
                            degenerate: true,
                            usable: usable as u64,
                            excluded: excluded as u64,
                            table: None,
                        },
                        v,
                    )
                }
                Err(other) => unreachable!("contingency only fails on record count: {other}"),
            };
            values[i][j] = v.value;
            values[j][i] = v.value;
            degenerate[i][j] = v.degenerate;
            degenerate[j][i] = v.degenerate;
            pairs.push(pair);
        }
    }
    AssociationMatrix {
        features: refs.iter().map(FeatureRef::name).collect(),
        values,
        degenerate,
        pairs,
    }
}
