//! Domain types shared by every module: problem instances, open-loop
//! recommendation schedules, and per-episode outcomes.
//!
//! Categories and types are 0-based indices in code. Anything printed for a
//! human (policy labels, CLI output) uses 1-based labels, so category index
//! `1` prints as "2".

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Slack on the simplex constraint for the type prior.
pub const PRIOR_TOLERANCE: f64 = 1e-12;

/// Slack on the margin check `max P <= 1 - epsilon`. Only absorbs the
/// rounding in `1 - (1 - p)` when epsilon is derived from the data.
const MARGIN_SLACK: f64 = 1e-12;

/// On-disk form of an instance. `P[a][x]` is the click probability of
/// category `a + 1` for type `x + 1`; `L` has the same layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawInstance {
    #[serde(rename = "M")]
    pub num_types: usize,
    #[serde(rename = "K")]
    pub num_categories: usize,
    pub q: Vec<f64>,
    #[serde(rename = "P")]
    pub click: Vec<Vec<f64>>,
    #[serde(rename = "L", default, skip_serializing_if = "Option::is_none")]
    pub depart: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
}

/// A validated departing-bandits instance: `M` user types with prior `q`,
/// `K` categories, click matrix `P` and departure matrix `L` (both `K x M`),
/// and the known margin `epsilon` with `max P <= 1 - epsilon`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawInstance", into = "RawInstance")]
pub struct Instance {
    prior: Vec<f64>,
    click: Vec<Vec<f64>>,
    depart: Vec<Vec<f64>>,
    epsilon: f64,
}

impl Instance {
    /// Validates and builds an instance. When `epsilon` is `None` it is
    /// derived as `1 - max P`.
    pub fn new(
        prior: Vec<f64>,
        click: Vec<Vec<f64>>,
        depart: Vec<Vec<f64>>,
        epsilon: Option<f64>,
    ) -> Result<Self> {
        let m = prior.len();
        let k = click.len();
        validate_instance(&RawInstance {
            num_types: m,
            num_categories: k,
            q: prior,
            click,
            depart: Some(depart),
            epsilon,
        })
    }

    /// Instance where every no-click ends the episode (`L = 1`).
    pub fn with_unit_departure(
        prior: Vec<f64>,
        click: Vec<Vec<f64>>,
        epsilon: Option<f64>,
    ) -> Result<Self> {
        let depart = click.iter().map(|row| vec![1.0; row.len()]).collect();
        Self::new(prior, click, depart, epsilon)
    }

    /// The two-type, two-category worked example: `P = [[0.5, 0.28], [0.4, 0.39]]`,
    /// `q = (0.4, 0.6)`, unit departure, `epsilon = 0.5`.
    pub fn table1() -> Self {
        Self::with_unit_departure(
            vec![0.4, 0.6],
            vec![vec![0.5, 0.28], vec![0.4, 0.39]],
            Some(0.5),
        )
        .expect("worked example is valid")
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let raw: RawInstance = serde_json::from_str(text)?;
        validate_instance(&raw)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json_str(&text)
    }

    pub fn to_json_string(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn num_types(&self) -> usize {
        self.prior.len()
    }

    pub fn num_categories(&self) -> usize {
        self.click.len()
    }

    pub fn prior(&self) -> &[f64] {
        &self.prior
    }

    pub fn click_matrix(&self) -> &[Vec<f64>] {
        &self.click
    }

    pub fn depart_matrix(&self) -> &[Vec<f64>] {
        &self.depart
    }

    pub fn click(&self, category: usize, user_type: usize) -> f64 {
        self.click[category][user_type]
    }

    pub fn depart(&self, category: usize, user_type: usize) -> f64 {
        self.depart[category][user_type]
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn has_unit_departure(&self) -> bool {
        self.depart.iter().flatten().all(|&l| l == 1.0)
    }

    pub fn is_two_by_two(&self) -> bool {
        self.num_types() == 2 && self.num_categories() == 2
    }

    /// Returns a copy with a different margin, re-running validation.
    pub fn with_epsilon(&self, epsilon: f64) -> Result<Self> {
        Self::new(
            self.prior.clone(),
            self.click.clone(),
            self.depart.clone(),
            Some(epsilon),
        )
    }

    /// Returns a copy with a different type prior.
    pub fn with_prior(&self, prior: Vec<f64>) -> Result<Self> {
        Self::new(
            prior,
            self.click.clone(),
            self.depart.clone(),
            Some(self.epsilon),
        )
    }

    pub(crate) fn require_two_by_two(&self) -> Result<()> {
        if self.is_two_by_two() {
            Ok(())
        } else {
            Err(Error::Unsupported(format!(
                "a 2x2 instance (got K={}, M={})",
                self.num_categories(),
                self.num_types()
            )))
        }
    }

    pub(crate) fn require_unit_departure(&self) -> Result<()> {
        if self.has_unit_departure() {
            Ok(())
        } else {
            Err(Error::Unsupported(
                "departure probabilities equal to 1".to_string(),
            ))
        }
    }

    pub(crate) fn require_policy(&self, policy: &Policy) -> Result<()> {
        let k = self.num_categories();
        if policy.categories().any(|a| a >= k) {
            return Err(Error::InvalidPolicy(format!(
                "policy {policy} uses a category outside 1..={k}"
            )));
        }
        Ok(())
    }
}

impl TryFrom<RawInstance> for Instance {
    type Error = Error;

    fn try_from(raw: RawInstance) -> Result<Self> {
        validate_instance(&raw)
    }
}

impl From<Instance> for RawInstance {
    fn from(instance: Instance) -> Self {
        RawInstance {
            num_types: instance.num_types(),
            num_categories: instance.num_categories(),
            q: instance.prior,
            click: instance.click,
            depart: Some(instance.depart),
            epsilon: Some(instance.epsilon),
        }
    }
}

fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidInstance(msg.into())
}

fn check_matrix(name: &str, rows: &[Vec<f64>], k: usize, m: usize) -> Result<()> {
    if rows.len() != k {
        return Err(invalid(format!(
            "{name} has {} rows, expected K={k}",
            rows.len()
        )));
    }
    for (a, row) in rows.iter().enumerate() {
        if row.len() != m {
            return Err(invalid(format!(
                "{name} row {} has {} entries, expected M={m}",
                a + 1,
                row.len()
            )));
        }
    }
    Ok(())
}

/// Checks every structural and probabilistic constraint of an instance and
/// returns the validated value.
pub fn validate_instance(raw: &RawInstance) -> Result<Instance> {
    let (m, k) = (raw.num_types, raw.num_categories);
    if m == 0 || k == 0 {
        return Err(invalid("M and K must be positive"));
    }
    if raw.q.len() != m {
        return Err(invalid(format!(
            "q has {} entries, expected M={m}",
            raw.q.len()
        )));
    }
    if raw.q.iter().any(|&p| !p.is_finite() || p < 0.0) {
        return Err(invalid("prior entries must be non-negative"));
    }
    let total: f64 = raw.q.iter().sum();
    if (total - 1.0).abs() > PRIOR_TOLERANCE {
        return Err(invalid(format!("prior sums to {total}, expected 1")));
    }

    check_matrix("P", &raw.click, k, m)?;
    let depart = match &raw.depart {
        Some(rows) => rows.clone(),
        None => vec![vec![1.0; m]; k],
    };
    check_matrix("L", &depart, k, m)?;

    let mut max_click = 0.0_f64;
    for (a, row) in raw.click.iter().enumerate() {
        for (x, &p) in row.iter().enumerate() {
            if !(p > 0.0 && p < 1.0) {
                return Err(invalid(format!(
                    "P[{}][{}] = {p} is outside (0, 1)",
                    a + 1,
                    x + 1
                )));
            }
            max_click = max_click.max(p);
        }
    }
    for (a, row) in depart.iter().enumerate() {
        for (x, &l) in row.iter().enumerate() {
            if !(l > 0.0 && l <= 1.0) {
                return Err(invalid(format!(
                    "L[{}][{}] = {l} is outside (0, 1]",
                    a + 1,
                    x + 1
                )));
            }
        }
    }

    let epsilon = raw.epsilon.unwrap_or(1.0 - max_click);
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(invalid(format!("epsilon = {epsilon} is outside (0, 1)")));
    }
    if max_click > 1.0 - epsilon + MARGIN_SLACK {
        return Err(invalid(format!(
            "max click probability {max_click} exceeds 1 - epsilon = {}",
            1.0 - epsilon
        )));
    }

    Ok(Instance {
        prior: raw.q.clone(),
        click: raw.click.clone(),
        depart,
        epsilon,
    })
}

/// Open-loop recommendation schedule: play `prefix[j]` at iteration `j`
/// (0-based) while it lasts, then `tail` forever.
///
/// Construction always trims trailing prefix entries equal to the tail, so
/// two schedules that recommend the same categories compare equal.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Policy {
    prefix: Vec<usize>,
    tail: usize,
}

impl Policy {
    pub fn new(mut prefix: Vec<usize>, tail: usize) -> Self {
        while prefix.last() == Some(&tail) {
            prefix.pop();
        }
        Policy { prefix, tail }
    }

    /// Recommends `category` at every iteration.
    pub fn fixed(category: usize) -> Self {
        Policy {
            prefix: Vec::new(),
            tail: category,
        }
    }

    /// Two-category threshold policy: `first` for iterations `1..=h`, the
    /// other category afterwards. With `h = 0` this is the fixed policy of
    /// the other category.
    pub fn threshold(first: usize, h: usize) -> Result<Self> {
        if first > 1 {
            return Err(Error::InvalidPolicy(format!(
                "threshold policies need category 1 or 2, got {}",
                first + 1
            )));
        }
        Ok(Self::new(vec![first; h], 1 - first))
    }

    pub fn prefix(&self) -> &[usize] {
        &self.prefix
    }

    pub fn tail(&self) -> usize {
        self.tail
    }

    /// Category recommended at 0-based iteration `j`.
    pub fn action(&self, j: usize) -> usize {
        self.prefix.get(j).copied().unwrap_or(self.tail)
    }

    /// The first `len` recommendations.
    pub fn schedule(&self, len: usize) -> Vec<usize> {
        (0..len).map(|j| self.action(j)).collect()
    }

    /// Every category appearing in the schedule.
    pub fn categories(&self) -> impl Iterator<Item = usize> + '_ {
        self.prefix
            .iter()
            .copied()
            .chain(std::iter::once(self.tail))
    }

    /// `(first, h)` when this is a two-category threshold policy. Fixed
    /// policies of category 1 or 2 report `h = 0`.
    pub fn as_threshold(&self) -> Option<(usize, usize)> {
        if self.tail > 1 {
            return None;
        }
        let other = 1 - self.tail;
        if self.prefix.iter().all(|&a| a == other) {
            Some((other, self.prefix.len()))
        } else {
            None
        }
    }

    /// Applies a relabeling of categories.
    pub fn relabel(&self, map: impl Fn(usize) -> usize) -> Self {
        Self::new(
            self.prefix.iter().map(|&a| map(a)).collect(),
            map(self.tail),
        )
    }

    /// Parses `fixed:A`, `threshold:A:H`, `A,A,...;T`, or any `Display`
    /// form (`pi^A`, `(A,H)`, `[A,...]+T*`). Labels are 1-based.
    pub fn parse(text: &str) -> Result<Self> {
        let bad = || Error::InvalidPolicy(format!("cannot parse policy '{text}'"));
        let label = |s: &str| -> Result<usize> {
            match s.trim().parse::<usize>() {
                Ok(v) if v >= 1 => Ok(v - 1),
                _ => Err(bad()),
            }
        };
        let text = text.trim();
        if let Some(rest) = text.strip_prefix("pi^") {
            return Ok(Self::fixed(label(rest)?));
        }
        if let Some(rest) = text.strip_prefix('(').and_then(|r| r.strip_suffix(')')) {
            let (a, h) = rest.split_once(',').ok_or_else(bad)?;
            let h = h.trim().parse::<usize>().map_err(|_| bad())?;
            return Self::threshold(label(a)?, h);
        }
        if let Some(rest) = text.strip_prefix('[').and_then(|r| r.strip_suffix('*')) {
            let (prefix, tail) = rest.split_once("]+").ok_or_else(bad)?;
            let prefix = prefix.split(',').map(label).collect::<Result<Vec<_>>>()?;
            return Ok(Self::new(prefix, label(tail)?));
        }
        if let Some(rest) = text.strip_prefix("fixed:") {
            return Ok(Self::fixed(label(rest)?));
        }
        if let Some(rest) = text.strip_prefix("threshold:") {
            let (a, h) = rest.split_once(':').ok_or_else(bad)?;
            let h = h.trim().parse::<usize>().map_err(|_| bad())?;
            return Self::threshold(label(a)?, h);
        }
        let (prefix, tail) = text.split_once(';').ok_or_else(bad)?;
        let prefix = if prefix.trim().is_empty() {
            Vec::new()
        } else {
            prefix.split(',').map(label).collect::<Result<Vec<_>>>()?
        };
        Ok(Self::new(prefix, label(tail)?))
    }
}

impl fmt::Display for Policy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.prefix.is_empty() {
            return write!(f, "pi^{}", self.tail + 1);
        }
        if let Some((first, h)) = self.as_threshold() {
            return write!(f, "({},{})", first + 1, h);
        }
        let labels: Vec<String> = self.prefix.iter().map(|a| (a + 1).to_string()).collect();
        write!(f, "[{}]+{}*", labels.join(","), self.tail + 1)
    }
}

/// Outcome of one user's episode: clicks collected and recommendations made.
/// The final recommendation (the one followed by departure) counts toward
/// `length` but not toward `return_clicks`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EpisodeResult {
    pub return_clicks: u64,
    pub length: u64,
}
