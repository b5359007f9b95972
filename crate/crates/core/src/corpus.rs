//! Annotated comment corpora: data model, CSV ingestion, validation and
//! synthetic generation.
//!
//! Every record carries the six classifier labels (stance, logic,
//! experience, hate speech, aggression toward the opponent, aggression
//! toward other targets). Parent labels are found by joining on
//! `parent_id` or read from the `*_p` columns, which exist because many
//! parents (posts, comments outside the sample) are not rows themselves.

use std::collections::{BTreeMap, HashMap};
use std::io::{Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_probability, invalid, Error, Result};
use crate::meanfield::ModelParams;

pub const CSV_HEADER: [&str; 15] = [
    "id",
    "parent_kind",
    "parent_id",
    "stance",
    "logic",
    "experience",
    "hate",
    "aggr_opponent",
    "aggr_other",
    "stance_p",
    "logic_p",
    "experience_p",
    "hate_p",
    "aggr_opponent_p",
    "aggr_other_p",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Stance {
    Against = 0,
    For = 1,
    Unclear = 2,
}

impl Stance {
    pub const ALL: [Stance; 3] = [Stance::Against, Stance::For, Stance::Unclear];

    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Stance::Against),
            1 => Some(Stance::For),
            2 => Some(Stance::Unclear),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ParentKind {
    Post,
    Comment,
}

/// The six classifier labels of one message.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Features {
    pub stance: Stance,
    pub logic: bool,
    pub experience: bool,
    pub hate: bool,
    pub aggr_opponent: bool,
    pub aggr_other: bool,
}

impl Features {
    pub fn neutral(stance: Stance) -> Self {
        Self {
            stance,
            logic: false,
            experience: false,
            hate: false,
            aggr_opponent: false,
            aggr_other: false,
        }
    }

    /// Level index of `feature`: the stance code, or 0/1 for flags.
    pub fn level(&self, feature: Feature) -> usize {
        match feature {
            Feature::Stance => self.stance.code() as usize,
            Feature::Logic => self.logic as usize,
            Feature::Experience => self.experience as usize,
            Feature::Hate => self.hate as usize,
            Feature::AggrOpponent => self.aggr_opponent as usize,
            Feature::AggrOther => self.aggr_other as usize,
        }
    }

    /// First field on which the two label sets differ.
    pub fn first_difference(&self, other: &Features) -> Option<Feature> {
        Feature::ALL
            .into_iter()
            .find(|&f| self.level(f) != other.level(f))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Feature {
    Stance,
    Logic,
    Experience,
    Hate,
    AggrOpponent,
    AggrOther,
}

impl Feature {
    pub const ALL: [Feature; 6] = [
        Feature::Stance,
        Feature::Logic,
        Feature::Experience,
        Feature::Hate,
        Feature::AggrOpponent,
        Feature::AggrOther,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Feature::Stance => "stance",
            Feature::Logic => "logic",
            Feature::Experience => "experience",
            Feature::Hate => "hate",
            Feature::AggrOpponent => "aggr_opponent",
            Feature::AggrOther => "aggr_other",
        }
    }

    pub fn levels(self) -> usize {
        match self {
            Feature::Stance => 3,
            _ => 2,
        }
    }

    pub fn level_labels(self) -> Vec<String> {
        match self {
            Feature::Stance => vec!["against".into(), "for".into(), "unclear".into()],
            _ => vec!["0".into(), "1".into()],
        }
    }
}

/// Which aggression label carries the reply dynamics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Channel {
    Opponent,
    Other,
}

impl Channel {
    pub fn feature(self) -> Feature {
        match self {
            Channel::Opponent => Feature::AggrOpponent,
            Channel::Other => Feature::AggrOther,
        }
    }

    pub fn flag(self, f: &Features) -> bool {
        match self {
            Channel::Opponent => f.aggr_opponent,
            Channel::Other => f.aggr_other,
        }
    }

    fn set_flag(self, f: &mut Features, value: bool) {
        match self {
            Channel::Opponent => f.aggr_opponent = value,
            Channel::Other => f.aggr_other = value,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommentRecord {
    pub id: String,
    pub parent_kind: ParentKind,
    pub parent_id: Option<String>,
    pub features: Features,
    /// Explicit copy of the parent's labels, when annotated.
    pub parent_features: Option<Features>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Corpus {
    records: Vec<CommentRecord>,
    index: HashMap<String, usize>,
    step_of: Option<BTreeMap<String, u32>>,
}

impl Corpus {
    /// Builds a corpus, rejecting duplicate ids. Parent consistency is a
    /// validation concern, see [`validate_corpus`].
    pub fn new(records: Vec<CommentRecord>) -> Result<Self> {
        let mut index = HashMap::with_capacity(records.len());
        for (i, r) in records.iter().enumerate() {
            if index.insert(r.id.clone(), i).is_some() {
                return Err(Error::DuplicateId(r.id.clone()));
            }
        }
        Ok(Self {
            records,
            index,
            step_of: None,
        })
    }

    pub fn empty() -> Self {
        Self::new(Vec::new()).expect("no ids to clash")
    }

    pub fn records(&self) -> &[CommentRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&CommentRecord> {
        self.index.get(id).map(|&i| &self.records[i])
    }

    /// Step index of each record, for synthetic corpora.
    pub fn step_of(&self) -> Option<&BTreeMap<String, u32>> {
        self.step_of.as_ref()
    }

    /// Parent labels of `record`: the explicit copy if present, otherwise
    /// the joined parent row.
    pub fn parent_features(&self, record: &CommentRecord) -> Option<Features> {
        record.parent_features.or_else(|| {
            record
                .parent_id
                .as_deref()
                .and_then(|pid| self.get(pid))
                .map(|p| p.features)
        })
    }

    fn parent_conflict(&self, record: &CommentRecord) -> Option<Error> {
        let explicit = record.parent_features?;
        let pid = record.parent_id.as_deref()?;
        let parent = self.get(pid)?;
        explicit
            .first_difference(&parent.features)
            .map(|f| Error::ParentConflict {
                id: record.id.clone(),
                parent: pid.to_owned(),
                field: format!("{}_p", f.name()),
            })
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(CSV_HEADER)?;
        for r in &self.records {
            let mut row: Vec<String> = Vec::with_capacity(CSV_HEADER.len());
            row.push(r.id.clone());
            row.push(
                match r.parent_kind {
                    ParentKind::Post => "post",
                    ParentKind::Comment => "comment",
                }
                .into(),
            );
            row.push(r.parent_id.clone().unwrap_or_default());
            push_features(&mut row, Some(&r.features));
            push_features(&mut row, r.parent_features.as_ref());
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("csv output is utf-8")
    }
}

fn push_features(row: &mut Vec<String>, f: Option<&Features>) {
    match f {
        Some(f) => {
            row.push(f.stance.code().to_string());
            for flag in [f.logic, f.experience, f.hate, f.aggr_opponent, f.aggr_other] {
                row.push(if flag { "1" } else { "0" }.into());
            }
        }
        None => row.extend(std::iter::repeat_n(String::new(), 6)),
    }
}

fn row_error(row: usize, field: &str, message: impl Into<String>) -> Error {
    Error::Row {
        row,
        field: field.to_owned(),
        message: message.into(),
    }
}

fn parse_stance(row: usize, field: &str, cell: &str) -> Result<Stance> {
    cell.parse::<u8>()
        .ok()
        .and_then(Stance::from_code)
        .ok_or_else(|| {
            row_error(
                row,
                field,
                format!("stance out of range {{0,1,2}}: `{cell}`"),
            )
        })
}

fn parse_flag(row: usize, field: &str, cell: &str) -> Result<bool> {
    match cell {
        "0" => Ok(false),
        "1" => Ok(true),
        _ => Err(row_error(
            row,
            field,
            format!("flag must be 0 or 1, got `{cell}`"),
        )),
    }
}

/// Parses six consecutive feature cells starting at `start`. All empty
/// means absent; partially filled is an error.
fn parse_features(row: usize, rec: &csv::StringRecord, start: usize) -> Result<Option<Features>> {
    let cells: Vec<&str> = (start..start + 6)
        .map(|i| rec.get(i).unwrap_or("").trim())
        .collect();
    if cells.iter().all(|c| c.is_empty()) {
        return Ok(None);
    }
    if let Some(i) = cells.iter().position(|c| c.is_empty()) {
        return Err(row_error(
            row,
            CSV_HEADER[start + i],
            "missing value in a partially filled feature group",
        ));
    }
    let flag = |i: usize| parse_flag(row, CSV_HEADER[start + i], cells[i]);
    Ok(Some(Features {
        stance: parse_stance(row, CSV_HEADER[start], cells[0])?,
        logic: flag(1)?,
        experience: flag(2)?,
        hate: flag(3)?,
        aggr_opponent: flag(4)?,
        aggr_other: flag(5)?,
    }))
}

/// Reads a corpus CSV. Rows are numbered from 1 (the first data row).
pub fn parse_corpus<R: Read>(input: R) -> Result<Corpus> {
    let mut reader = csv::ReaderBuilder::new().flexible(true).from_reader(input);
    let header = reader.headers()?.clone();
    let names: Vec<&str> = header.iter().map(str::trim).collect();
    if names != CSV_HEADER {
        return Err(row_error(
            0,
            "header",
            format!("expected `{}`", CSV_HEADER.join(",")),
        ));
    }

    let mut records = Vec::new();
    let mut seen = HashMap::new();
    for (i, rec) in reader.records().enumerate() {
        let row = i + 1;
        let rec = rec?;
        if rec.len() != CSV_HEADER.len() {
            return Err(row_error(
                row,
                "row",
                format!("expected {} fields, found {}", CSV_HEADER.len(), rec.len()),
            ));
        }
        let id = rec[0].trim().to_owned();
        if id.is_empty() {
            return Err(row_error(row, "id", "empty id"));
        }
        if seen.insert(id.clone(), row).is_some() {
            return Err(Error::DuplicateId(id));
        }
        let parent_kind = match rec[1].trim().to_ascii_lowercase().as_str() {
            "post" => ParentKind::Post,
            "comment" => ParentKind::Comment,
            other => {
                return Err(row_error(
                    row,
                    "parent_kind",
                    format!("expected post or comment, got `{other}`"),
                ))
            }
        };
        let parent_id = Some(rec[2].trim().to_owned()).filter(|s| !s.is_empty());
        let features = parse_features(row, &rec, 3)?
            .ok_or_else(|| row_error(row, "stance", "own features are required"))?;
        let parent_features = parse_features(row, &rec, 9)?;
        if parent_kind == ParentKind::Comment && parent_id.is_none() && parent_features.is_none() {
            return Err(row_error(
                row,
                "parent_id",
                "comment reply has neither parent_id nor parent features",
            ));
        }
        records.push(CommentRecord {
            id,
            parent_kind,
            parent_id,
            features,
            parent_features,
        });
    }

    let corpus = Corpus::new(records)?;
    if let Some(err) = corpus
        .records
        .iter()
        .find_map(|r| corpus.parent_conflict(r))
    {
        return Err(err);
    }
    Ok(corpus)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub id: String,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub records: usize,
    pub replies_to_post: usize,
    pub replies_to_comment: usize,
    /// Comment replies whose parent row is present in the corpus.
    pub resolvable_parents: usize,
    /// Comment replies whose parent is outside the corpus but annotated
    /// through the `*_p` columns.
    pub external_parents: usize,
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

pub fn validate_corpus(c: &Corpus) -> ValidationReport {
    let mut report = ValidationReport {
        records: c.len(),
        ..Default::default()
    };
    for r in c.records() {
        match r.parent_kind {
            ParentKind::Post => report.replies_to_post += 1,
            ParentKind::Comment => report.replies_to_comment += 1,
        }
        let resolved = r.parent_id.as_deref().and_then(|pid| c.get(pid));
        if r.parent_kind == ParentKind::Comment {
            match (&r.parent_id, resolved, &r.parent_features) {
                (None, _, _) => report.violations.push(Violation {
                    id: r.id.clone(),
                    message: "comment reply without parent_id".into(),
                }),
                (Some(_), Some(_), _) => report.resolvable_parents += 1,
                (Some(_), None, Some(_)) => report.external_parents += 1,
                (Some(pid), None, None) => report.violations.push(Violation {
                    id: r.id.clone(),
                    message: format!("dangling parent_id `{pid}` without parent features"),
                }),
            }
        }
        if r.parent_id.as_deref() == Some(r.id.as_str()) {
            report.violations.push(Violation {
                id: r.id.clone(),
                message: "record is its own parent".into(),
            });
        }
        if let Some(err) = c.parent_conflict(r) {
            report.violations.push(Violation {
                id: r.id.clone(),
                message: err.to_string(),
            });
        }
    }
    report
}

/// Marginal probabilities for the labels that do not carry dynamics in a
/// synthetic corpus. Each is drawn independently per record.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureMarginals {
    /// Probabilities of against / for / unclear.
    pub stance: [f64; 3],
    pub logic: f64,
    pub experience: f64,
    pub hate: f64,
    pub aggr_opponent: f64,
    pub aggr_other: f64,
}

impl Default for FeatureMarginals {
    /// Shares observed in the annotated vaccination-discussion sample.
    fn default() -> Self {
        Self {
            stance: [0.24, 0.11, 0.65],
            logic: 0.04,
            experience: 0.07,
            hate: 0.17,
            aggr_opponent: 0.14,
            aggr_other: 0.39,
        }
    }
}

impl FeatureMarginals {
    pub fn validate(&self) -> Result<()> {
        for p in self.stance {
            check_probability("stance", p)?;
        }
        if (self.stance.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(invalid("stance", "class probabilities must sum to 1"));
        }
        check_probability("logic", self.logic)?;
        check_probability("experience", self.experience)?;
        check_probability("hate", self.hate)?;
        check_probability("aggr_opponent", self.aggr_opponent)?;
        check_probability("aggr_other", self.aggr_other)
    }

    /// Draws every label; the caller overwrites the dynamic channel.
    fn draw<R: Rng>(&self, rng: &mut R) -> Features {
        let u: f64 = rng.gen();
        let stance = if u < self.stance[0] {
            Stance::Against
        } else if u < self.stance[0] + self.stance[1] {
            Stance::For
        } else {
            Stance::Unclear
        };
        Features {
            stance,
            logic: rng.gen::<f64>() < self.logic,
            experience: rng.gen::<f64>() < self.experience,
            hate: rng.gen::<f64>() < self.hate,
            aggr_opponent: rng.gen::<f64>() < self.aggr_opponent,
            aggr_other: rng.gen::<f64>() < self.aggr_other,
        }
    }
}

/// [`synthesize_corpus_with`] using [`FeatureMarginals::default`].
pub fn synthesize_corpus(
    params: &ModelParams,
    horizon: usize,
    n_per_step: usize,
    x0: f64,
    seed: u64,
    channel: Channel,
) -> Result<Corpus> {
    synthesize_corpus_with(
        params,
        horizon,
        n_per_step,
        x0,
        seed,
        channel,
        &FeatureMarginals::default(),
    )
}

/// Generates a labelled corpus from the reply process.
///
/// Each step emits `n_per_step` records. A record replies to the post with
/// probability `1 - alpha`, otherwise to a uniformly chosen record of the
/// previous step. Step 1 replies to a virtual pool (not emitted) whose
/// channel flag is set with probability `x0`. Comment replies carry their
/// parent's labels in `parent_features`; virtual parents are external.
pub fn synthesize_corpus_with(
    params: &ModelParams,
    horizon: usize,
    n_per_step: usize,
    x0: f64,
    seed: u64,
    channel: Channel,
    marginals: &FeatureMarginals,
) -> Result<Corpus> {
    params.validate()?;
    marginals.validate()?;
    check_probability("x0", x0)?;
    if horizon == 0 {
        return Err(invalid("horizon", "must be positive"));
    }
    if n_per_step == 0 {
        return Err(invalid("n_per_step", "must be positive"));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pool: Vec<(String, Features)> = (0..n_per_step)
        .map(|i| {
            let mut f = marginals.draw(&mut rng);
            channel.set_flag(&mut f, rng.gen::<f64>() < x0);
            (format!("v_{i}"), f)
        })
        .collect();

    let mut records = Vec::with_capacity(horizon * n_per_step);
    let mut step_of = BTreeMap::new();
    for t in 1..=horizon {
        let mut next = Vec::with_capacity(n_per_step);
        for i in 0..n_per_step {
            let id = format!("c{t}_{i}");
            let (parent_kind, parent, p_aggr) = if rng.gen::<f64>() < params.alpha {
                let (pid, pf) = &pool[rng.gen_range(0..pool.len())];
                let p = if channel.flag(pf) {
                    params.p_reply_aggr
                } else {
                    params.p_reply_nonaggr
                };
                (ParentKind::Comment, Some((pid.clone(), *pf)), p)
            } else {
                (ParentKind::Post, None, params.p_reply_post)
            };
            let aggressive = rng.gen::<f64>() < p_aggr;
            let mut features = marginals.draw(&mut rng);
            channel.set_flag(&mut features, aggressive);

            step_of.insert(id.clone(), t as u32);
            next.push((id.clone(), features));
            records.push(CommentRecord {
                id,
                parent_kind,
                parent_id: parent.as_ref().map(|(pid, _)| pid.clone()),
                features,
                parent_features: parent.map(|(_, pf)| pf),
            });
        }
        pool = next;
    }

    let mut corpus = Corpus::new(records)?;
    corpus.step_of = Some(step_of);
    Ok(corpus)
}
