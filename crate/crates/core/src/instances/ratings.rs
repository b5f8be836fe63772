//! Semi-synthetic instances from explicit-feedback rating data.
//!
//! Items are grouped into categories by genre. Users who have not rated at
//! least one item of every selected category are dropped. A rating `r` on a
//! `[0, scale_max]` scale becomes a click probability `1 - r / scale_max`,
//! clamped into `[margin, 1 - epsilon]`. Users are then clustered on their
//! per-category click vectors; cluster means give `P`, cluster sizes give
//! `q`, and departure is deterministic after a no-click.

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::path::{Path, PathBuf};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::environment::{Environment, RngStream};
use crate::error::{Error, Result};
use crate::model::{EpisodeResult, Instance, Policy};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatingsConfig {
    pub scale_min: f64,
    pub scale_max: f64,
    pub genre_delimiter: char,
}

impl Default for RatingsConfig {
    fn default() -> Self {
        RatingsConfig {
            scale_min: 0.5,
            scale_max: 5.0,
            genre_delimiter: '|',
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RatingRecord {
    pub user: u64,
    pub item: u64,
    pub rating: f64,
    pub category: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MalformedRow {
    pub file: PathBuf,
    pub line: u64,
    pub reason: String,
}

/// Rows that did not make it into the table, and why.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoadReport {
    pub malformed: Vec<MalformedRow>,
    /// Items none of whose genres were selected.
    pub items_without_category: usize,
    /// Ratings of such items.
    pub ratings_without_category: usize,
    /// Ratings whose item id is absent from the items file.
    pub ratings_with_unknown_item: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatingsTable {
    pub categories: Vec<String>,
    pub config: RatingsConfig,
    pub records: Vec<RatingRecord>,
    pub report: LoadReport,
}

#[derive(Debug, Deserialize)]
struct ItemRow {
    #[serde(rename = "movieId")]
    movie_id: u64,
    #[allow(dead_code)]
    title: String,
    genres: String,
}

#[derive(Debug, Deserialize)]
struct RatingRow {
    #[serde(rename = "userId")]
    user_id: u64,
    #[serde(rename = "movieId")]
    movie_id: u64,
    rating: f64,
    #[allow(dead_code)]
    timestamp: Option<i64>,
}

fn open_csv(path: &Path) -> Result<csv::Reader<File>> {
    let file = File::open(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(file))
}

fn require_headers(reader: &mut csv::Reader<File>, path: &Path, needed: &[&str]) -> Result<bool> {
    let headers = reader.headers().map_err(|source| Error::Csv {
        path: path.to_path_buf(),
        source,
    })?;
    if headers.is_empty() {
        return Ok(false);
    }
    for column in needed {
        if !headers.iter().any(|h| h.trim() == *column) {
            return Err(Error::InvalidArgument(format!(
                "{}: missing column '{column}'",
                path.display()
            )));
        }
    }
    Ok(true)
}

fn malformed(path: &Path, err: &csv::Error, fallback_line: u64) -> MalformedRow {
    let line = err.position().map(|p| p.line()).unwrap_or(fallback_line);
    MalformedRow {
        file: path.to_path_buf(),
        line,
        reason: err.to_string(),
    }
}

/// Joins a ratings file (`userId,movieId,rating,timestamp`) with an items
/// file (`movieId,title,genres`). Items listed under several selected
/// genres yield one record per genre. Malformed rows are skipped and listed
/// with their line numbers in the report.
pub fn load_ratings(
    ratings_path: impl AsRef<Path>,
    items_path: impl AsRef<Path>,
    categories: &[String],
    config: &RatingsConfig,
) -> Result<RatingsTable> {
    let (ratings_path, items_path) = (ratings_path.as_ref(), items_path.as_ref());
    let mut report = LoadReport::default();

    let mut item_categories: HashMap<u64, Vec<usize>> = HashMap::new();
    let mut items = open_csv(items_path)?;
    if require_headers(&mut items, items_path, &["movieId", "title", "genres"])? {
        for (i, row) in items.deserialize::<ItemRow>().enumerate() {
            match row {
                Ok(item) => {
                    let cats: Vec<usize> = item
                        .genres
                        .split(config.genre_delimiter)
                        .filter_map(|g| categories.iter().position(|c| c == g.trim()))
                        .collect();
                    if cats.is_empty() {
                        report.items_without_category += 1;
                    }
                    item_categories.insert(item.movie_id, cats);
                }
                Err(e) => report
                    .malformed
                    .push(malformed(items_path, &e, i as u64 + 2)),
            }
        }
    }

    let mut records = Vec::new();
    let mut ratings = open_csv(ratings_path)?;
    if require_headers(&mut ratings, ratings_path, &["userId", "movieId", "rating"])? {
        for (i, row) in ratings.deserialize::<RatingRow>().enumerate() {
            let row = match row {
                Ok(row) => row,
                Err(e) => {
                    report
                        .malformed
                        .push(malformed(ratings_path, &e, i as u64 + 2));
                    continue;
                }
            };
            if !(row.rating >= config.scale_min && row.rating <= config.scale_max) {
                report.malformed.push(MalformedRow {
                    file: ratings_path.to_path_buf(),
                    line: i as u64 + 2,
                    reason: format!(
                        "rating {} outside [{}, {}]",
                        row.rating, config.scale_min, config.scale_max
                    ),
                });
                continue;
            }
            let Some(cats) = item_categories.get(&row.movie_id) else {
                report.ratings_with_unknown_item += 1;
                continue;
            };
            if cats.is_empty() {
                report.ratings_without_category += 1;
            }
            for &category in cats {
                records.push(RatingRecord {
                    user: row.user_id,
                    item: row.movie_id,
                    rating: row.rating,
                    category,
                });
            }
        }
    }

    Ok(RatingsTable {
        categories: categories.to_vec(),
        config: config.clone(),
        records,
        report,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SemiSyntheticConfig {
    pub epsilon: f64,
    pub margin: f64,
    pub max_iterations: usize,
    pub max_reseeds: usize,
}

impl Default for SemiSyntheticConfig {
    fn default() -> Self {
        SemiSyntheticConfig {
            epsilon: 0.1,
            margin: 0.01,
            max_iterations: 100,
            max_reseeds: 10,
        }
    }
}

impl SemiSyntheticConfig {
    fn clamp(&self, p: f64) -> f64 {
        p.clamp(self.margin, 1.0 - self.epsilon)
    }
}

/// Per-user normalized ratings grouped by category, for users that rated
/// every category.
fn retained_users(table: &RatingsTable) -> BTreeMap<u64, Vec<Vec<f64>>> {
    let k = table.categories.len();
    let mut by_user: BTreeMap<u64, Vec<Vec<f64>>> = BTreeMap::new();
    for r in &table.records {
        by_user.entry(r.user).or_insert_with(|| vec![Vec::new(); k])[r.category]
            .push(r.rating / table.config.scale_max);
    }
    by_user.retain(|_, cats| cats.iter().all(|c| !c.is_empty()));
    by_user
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SemiSynthetic {
    pub instance: Instance,
    /// Retained users in ascending id order.
    pub users: Vec<u64>,
    /// Type index of each retained user.
    pub assignments: Vec<usize>,
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(point: &[f64], centers: &[Vec<f64>]) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (c, center) in centers.iter().enumerate() {
        let d = squared_distance(point, center);
        if d < best_d {
            best = c;
            best_d = d;
        }
    }
    best
}

/// k-means++ seeding.
fn seed_centers<R: Rng + ?Sized>(points: &[Vec<f64>], k: usize, rng: &mut R) -> Vec<Vec<f64>> {
    let mut centers = vec![points[rng.gen_range(0..points.len())].clone()];
    while centers.len() < k {
        let d: Vec<f64> = points
            .iter()
            .map(|p| squared_distance(p, &centers[nearest(p, &centers)]))
            .collect();
        let total: f64 = d.iter().sum();
        let next = if total > 0.0 {
            let mut u = rng.gen::<f64>() * total;
            let mut pick = d.len() - 1;
            for (i, &w) in d.iter().enumerate() {
                if u < w {
                    pick = i;
                    break;
                }
                u -= w;
            }
            pick
        } else {
            rng.gen_range(0..points.len())
        };
        centers.push(points[next].clone());
    }
    centers
}

/// Lloyd iterations; `None` when a cluster empties out.
fn lloyd(
    points: &[Vec<f64>],
    mut centers: Vec<Vec<f64>>,
    max_iterations: usize,
) -> Option<(Vec<Vec<f64>>, Vec<usize>)> {
    let dim = points[0].len();
    let mut assignment: Vec<usize> = points.iter().map(|p| nearest(p, &centers)).collect();
    for _ in 0..max_iterations {
        let mut sums = vec![vec![0.0; dim]; centers.len()];
        let mut counts = vec![0usize; centers.len()];
        for (p, &c) in points.iter().zip(&assignment) {
            counts[c] += 1;
            sums[c].iter_mut().zip(p).for_each(|(s, v)| *s += v);
        }
        if counts.contains(&0) {
            return None;
        }
        for (c, sum) in sums.into_iter().enumerate() {
            centers[c] = sum.into_iter().map(|s| s / counts[c] as f64).collect();
        }
        let next: Vec<usize> = points.iter().map(|p| nearest(p, &centers)).collect();
        if next == assignment {
            break;
        }
        assignment = next;
    }
    let mut counts = vec![0usize; centers.len()];
    assignment.iter().for_each(|&c| counts[c] += 1);
    (!counts.contains(&0)).then_some((centers, assignment))
}

/// Builds an `K x M` instance from a ratings table.
pub fn build_semi_synthetic<R: Rng + ?Sized>(
    table: &RatingsTable,
    num_types: usize,
    config: &SemiSyntheticConfig,
    rng: &mut R,
) -> Result<SemiSynthetic> {
    let k = table.categories.len();
    if k < 2 || num_types == 0 {
        return Err(Error::InvalidArgument(
            "need at least two categories and one type".to_string(),
        ));
    }
    let users = retained_users(table);
    if users.len() < 10 * num_types {
        return Err(Error::InvalidArgument(format!(
            "only {} users rated every category; need at least {}",
            users.len(),
            10 * num_types
        )));
    }
    let ids: Vec<u64> = users.keys().copied().collect();
    let points: Vec<Vec<f64>> = users
        .values()
        .map(|cats| {
            cats.iter()
                .map(|rs| config.clamp(1.0 - rs.iter().sum::<f64>() / rs.len() as f64))
                .collect()
        })
        .collect();

    let mut fitted = None;
    for _ in 0..config.max_reseeds {
        let centers = seed_centers(&points, num_types, rng);
        if let Some(found) = lloyd(&points, centers, config.max_iterations) {
            fitted = Some(found);
            break;
        }
    }
    let (centers, assignment) = fitted.ok_or_else(|| {
        Error::Clustering(format!(
            "a cluster stayed empty after {} reseeds",
            config.max_reseeds
        ))
    })?;

    // Order types by decreasing click probability on the first category.
    let mut order: Vec<usize> = (0..num_types).collect();
    order.sort_by(|&a, &b| centers[b].partial_cmp(&centers[a]).expect("finite centers"));
    let mut rank = vec![0; num_types];
    for (new, &old) in order.iter().enumerate() {
        rank[old] = new;
    }
    let assignments: Vec<usize> = assignment.iter().map(|&c| rank[c]).collect();

    let n = points.len() as f64;
    let mut counts = vec![0usize; num_types];
    assignments.iter().for_each(|&c| counts[c] += 1);
    let prior: Vec<f64> = counts.iter().map(|&c| c as f64 / n).collect();
    let click: Vec<Vec<f64>> = (0..k)
        .map(|a| {
            order
                .iter()
                .map(|&old| config.clamp(centers[old][a]))
                .collect()
        })
        .collect();
    let instance = Instance::with_unit_departure(prior, click, Some(config.epsilon))?;
    Ok(SemiSynthetic {
        instance,
        users: ids,
        assignments,
    })
}

/// Replays real users: each episode draws a retained user, and each
/// recommendation of category `a` draws one of the items that user rated
/// in `a`, clicked with probability `1 - r` (clamped as for the instance).
/// A no-click ends the episode.
#[derive(Debug, Clone)]
pub struct RatingsEnvironment {
    users: Vec<Vec<Vec<f64>>>,
    config: SemiSyntheticConfig,
}

impl RatingsEnvironment {
    pub fn new(table: &RatingsTable, config: SemiSyntheticConfig) -> Result<Self> {
        let users: Vec<Vec<Vec<f64>>> = retained_users(table).into_values().collect();
        if users.is_empty() {
            return Err(Error::InvalidArgument(
                "no user rated every category".to_string(),
            ));
        }
        Ok(RatingsEnvironment { users, config })
    }

    pub fn num_users(&self) -> usize {
        self.users.len()
    }

    pub fn num_categories(&self) -> usize {
        self.users[0].len()
    }
}

impl Environment for RatingsEnvironment {
    fn run_episode(&self, policy: &Policy, rng: &mut RngStream) -> Result<EpisodeResult> {
        let k = self.num_categories();
        if policy
            .prefix()
            .iter()
            .chain([policy.tail()].iter())
            .any(|&a| a >= k)
        {
            return Err(Error::InvalidPolicy(format!(
                "{policy} uses a category outside 1..={k}"
            )));
        }
        let user = &self.users[rng.gen_range(0..self.users.len())];
        let mut clicks = 0u64;
        let mut j = 0usize;
        loop {
            let rated = &user[policy.action(j)];
            j += 1;
            let r = rated[rng.gen_range(0..rated.len())];
            if rng.gen::<f64>() < self.config.clamp(1.0 - r) {
                clicks += 1;
            } else {
                return Ok(EpisodeResult {
                    return_clicks: clicks,
                    length: j as u64,
                });
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write(dir: &Path, name: &str, body: &str) -> PathBuf {
        let path = dir.join(name);
        let mut f = File::create(&path).unwrap();
        f.write_all(body.as_bytes()).unwrap();
        path
    }

    fn cats(names: &[&str]) -> Vec<String> {
        names.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn parses_and_joins() {
        let dir = tempfile::tempdir().unwrap();
        let items = write(
            dir.path(),
            "movies.csv",
            "movieId,title,genres\n1,\"Alien, The\",Horror|Sci-Fi\n2,Heat,Action\n3,Up,Animation\n",
        );
        let ratings = write(
            dir.path(),
            "ratings.csv",
            "userId,movieId,rating,timestamp\n1,1,4.0,0\n1,2,3.5,0\n2,3,2.0,0\nx,1,2.0,0\n2,2,9.0,0\n3,7,1.0,0\n",
        );
        let table = load_ratings(
            &ratings,
            &items,
            &cats(&["Sci-Fi", "Action", "Horror"]),
            &RatingsConfig::default(),
        )
        .unwrap();
        // Rating of movie 1 appears under both Horror and Sci-Fi.
        assert_eq!(table.records.len(), 3);
        assert_eq!(table.report.malformed.len(), 2);
        assert_eq!(table.report.malformed[0].line, 5);
        assert_eq!(table.report.malformed[1].line, 6);
        assert_eq!(table.report.items_without_category, 1);
        assert_eq!(table.report.ratings_without_category, 1);
        assert_eq!(table.report.ratings_with_unknown_item, 1);
    }

    #[test]
    fn empty_files_give_empty_table() {
        let dir = tempfile::tempdir().unwrap();
        let items = write(dir.path(), "movies.csv", "");
        let ratings = write(dir.path(), "ratings.csv", "");
        let table = load_ratings(
            &ratings,
            &items,
            &cats(&["Drama"]),
            &RatingsConfig::default(),
        )
        .unwrap();
        assert!(table.records.is_empty());
        assert!(table.report.malformed.is_empty());
    }

    #[test]
    fn missing_file_and_column_are_errors() {
        let dir = tempfile::tempdir().unwrap();
        let items = write(dir.path(), "movies.csv", "movieId,name\n1,x\n");
        let ratings = write(
            dir.path(),
            "ratings.csv",
            "userId,movieId,rating,timestamp\n",
        );
        let cfg = RatingsConfig::default();
        assert!(load_ratings(&ratings, &items, &cats(&["Drama"]), &cfg).is_err());
        assert!(
            load_ratings(dir.path().join("nope.csv"), &items, &cats(&["Drama"]), &cfg).is_err()
        );
    }

    fn synthetic_table(users: &[(u64, [f64; 2])]) -> RatingsTable {
        let mut records = Vec::new();
        for &(user, ratings) in users {
            for (category, &rating) in ratings.iter().enumerate() {
                records.push(RatingRecord {
                    user,
                    item: category as u64,
                    rating,
                    category,
                });
            }
        }
        RatingsTable {
            categories: cats(&["A", "B"]),
            config: RatingsConfig::default(),
            records,
            report: LoadReport::default(),
        }
    }

    #[test]
    fn single_cluster_is_population_mean() {
        let users: Vec<(u64, [f64; 2])> = (0..20)
            .map(|u| (u, if u % 2 == 0 { [2.5, 1.0] } else { [3.5, 2.0] }))
            .collect();
        let table = synthetic_table(&users);
        let out = build_semi_synthetic(
            &table,
            1,
            &SemiSyntheticConfig::default(),
            &mut RngStream::new(0, 0),
        )
        .unwrap();
        assert_eq!(out.instance.prior(), &[1.0]);
        // Mean of 1 - r/5 over users: category A (0.5 + 0.3) / 2, B (0.8 + 0.6) / 2.
        assert!((out.instance.click(0, 0) - 0.4).abs() < 1e-12);
        assert!((out.instance.click(1, 0) - 0.7).abs() < 1e-12);
    }

    #[test]
    fn identical_users_give_flat_matrix() {
        let users: Vec<(u64, [f64; 2])> = (0..15).map(|u| (u, [3.0, 3.0])).collect();
        let out = build_semi_synthetic(
            &synthetic_table(&users),
            1,
            &SemiSyntheticConfig::default(),
            &mut RngStream::new(0, 0),
        )
        .unwrap();
        assert_eq!(out.instance.click(0, 0), out.instance.click(1, 0));
    }

    #[test]
    fn too_few_users_is_an_error() {
        let users: Vec<(u64, [f64; 2])> = (0..15).map(|u| (u, [3.0, 1.0])).collect();
        let err = build_semi_synthetic(
            &synthetic_table(&users),
            2,
            &SemiSyntheticConfig::default(),
            &mut RngStream::new(0, 0),
        )
        .unwrap_err();
        assert!(err.to_string().contains("need at least 20"), "{err}");
    }

    #[test]
    fn users_missing_a_category_are_dropped() {
        let mut table = synthetic_table(&(0..12).map(|u| (u, [3.0, 1.0])).collect::<Vec<_>>());
        table.records.retain(|r| !(r.user < 3 && r.category == 1));
        let kept = retained_users(&table);
        assert_eq!(kept.len(), 9);
        assert!(kept.keys().all(|&u| u >= 3));
    }

    #[test]
    fn replay_environment_clicks_by_rating() {
        // Rating 5 on A: click probability clamps to the margin.
        let users: Vec<(u64, [f64; 2])> = (0..10).map(|u| (u, [5.0, 0.5])).collect();
        let env = RatingsEnvironment::new(&synthetic_table(&users), SemiSyntheticConfig::default())
            .unwrap();
        let mut clicks_a = 0;
        let mut clicks_b = 0;
        for i in 0..2000 {
            clicks_a += env
                .run_episode(&Policy::fixed(0), &mut RngStream::new(1, i))
                .unwrap()
                .return_clicks;
            clicks_b += env
                .run_episode(&Policy::fixed(1), &mut RngStream::new(1, i))
                .unwrap()
                .return_clicks;
        }
        assert!(clicks_a < 100);
        // Category B clicks with probability 0.9: mean return 9.
        assert!((clicks_b as f64 / 2000.0 - 9.0).abs() < 1.0);
    }
}
