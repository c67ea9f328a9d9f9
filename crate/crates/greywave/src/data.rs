//! Rating datasets: sparse user-item matrices, format loaders, sampling,
//! labels, and per-item statistics.

use std::collections::{BTreeSet, HashMap};
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type UserId = String;
pub type ItemId = String;

/// Inclusive integer rating bounds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RatingScale {
    pub min: i32,
    pub max: i32,
}

impl RatingScale {
    /// The 1..10 scale shared by the supported datasets.
    pub const ONE_TO_TEN: RatingScale = RatingScale { min: 1, max: 10 };

    pub fn contains(&self, rating: i32) -> bool {
        rating >= self.min && rating <= self.max
    }

    /// Round to the nearest integer and clamp into the scale.
    pub fn quantize(&self, value: f64) -> i32 {
        let rounded = value.round();
        if rounded < self.min as f64 {
            self.min
        } else if rounded > self.max as f64 {
            self.max
        } else {
            rounded as i32
        }
    }
}

/// Supported input formats for [`load_ratings`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum InputFormat {
    /// Semicolon-separated, double-quoted `"User-ID";"ISBN";"Book-Rating"`.
    /// Rating 0 marks implicit feedback and is dropped.
    Bookcrossing,
    /// Tab-separated `user_ratedmovies.dat` with a header naming at least
    /// userID, movieID and rating. Half-point ratings are doubled onto 1..10.
    Hetrec,
    /// Comma-separated `user_id,item_id,rating` with a header row.
    GenericCsv,
}

/// Sparse user x item integer-rating store.
///
/// Users and items are kept sorted by id, so indices are reproducible across
/// runs and machines. A missing pair means "unrated"; rating 0 is never
/// stored.
#[derive(Debug, Clone, PartialEq)]
pub struct RatingMatrix {
    scale: RatingScale,
    users: Vec<UserId>,
    items: Vec<ItemId>,
    user_lookup: HashMap<UserId, u32>,
    item_lookup: HashMap<ItemId, u32>,
    /// Per user: (item index, rating), sorted by item index.
    rows: Vec<Vec<(u32, i32)>>,
    /// Per item: user indices, sorted.
    raters: Vec<Vec<u32>>,
    n_ratings: usize,
}

impl RatingMatrix {
    pub fn scale(&self) -> RatingScale {
        self.scale
    }

    pub fn n_users(&self) -> usize {
        self.users.len()
    }

    pub fn n_items(&self) -> usize {
        self.items.len()
    }

    pub fn n_ratings(&self) -> usize {
        self.n_ratings
    }

    pub fn users(&self) -> &[UserId] {
        &self.users
    }

    pub fn items(&self) -> &[ItemId] {
        &self.items
    }

    pub fn user_id(&self, index: usize) -> &str {
        &self.users[index]
    }

    pub fn item_id(&self, index: usize) -> &str {
        &self.items[index]
    }

    pub fn user_index(&self, id: &str) -> Option<usize> {
        self.user_lookup.get(id).map(|&i| i as usize)
    }

    pub fn item_index(&self, id: &str) -> Option<usize> {
        self.item_lookup.get(id).map(|&i| i as usize)
    }

    /// Ratings of one user as (item index, rating), sorted by item index.
    pub fn user_ratings(&self, user_index: usize) -> &[(u32, i32)] {
        &self.rows[user_index]
    }

    /// Users who rated one item, sorted by user index.
    pub fn item_raters(&self, item_index: usize) -> &[u32] {
        &self.raters[item_index]
    }

    pub fn rating_at(&self, user_index: usize, item_index: usize) -> Option<i32> {
        let row = &self.rows[user_index];
        row.binary_search_by_key(&(item_index as u32), |&(i, _)| i)
            .ok()
            .map(|pos| row[pos].1)
    }

    pub fn rating(&self, user: &str, item: &str) -> Option<i32> {
        let u = self.user_index(user)?;
        let i = self.item_index(item)?;
        self.rating_at(u, i)
    }

    /// All ratings in canonical (user, item) order.
    pub fn iter_ratings(&self) -> impl Iterator<Item = (usize, usize, i32)> + '_ {
        self.rows.iter().enumerate().flat_map(|(u, row)| {
            row.iter().map(move |&(i, r)| (u, i as usize, r))
        })
    }

    /// Persist as generic CSV (`user_id,item_id,rating`), rows sorted by
    /// (user id, item id).
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = BufWriter::new(file);
        writeln!(out, "user_id,item_id,rating").map_err(|e| Error::io(path, e))?;
        for (u, i, r) in self.iter_ratings() {
            writeln!(out, "{},{},{}", self.users[u], self.items[i], r)
                .map_err(|e| Error::io(path, e))?;
        }
        out.flush().map_err(|e| Error::io(path, e))?;
        Ok(())
    }
}

/// Accumulates ratings and builds a canonical [`RatingMatrix`].
///
/// Duplicate (user, item) pairs keep the last rating added.
pub struct RatingMatrixBuilder {
    scale: RatingScale,
    users: Vec<UserId>,
    items: Vec<ItemId>,
    user_lookup: HashMap<UserId, u32>,
    item_lookup: HashMap<ItemId, u32>,
    cells: HashMap<(u32, u32), i32>,
}

impl RatingMatrixBuilder {
    pub fn new(scale: RatingScale) -> Self {
        RatingMatrixBuilder {
            scale,
            users: Vec::new(),
            items: Vec::new(),
            user_lookup: HashMap::new(),
            item_lookup: HashMap::new(),
            cells: HashMap::new(),
        }
    }

    fn intern_user(&mut self, id: &str) -> u32 {
        if let Some(&idx) = self.user_lookup.get(id) {
            return idx;
        }
        let idx = self.users.len() as u32;
        self.users.push(id.to_string());
        self.user_lookup.insert(id.to_string(), idx);
        idx
    }

    fn intern_item(&mut self, id: &str) -> u32 {
        if let Some(&idx) = self.item_lookup.get(id) {
            return idx;
        }
        let idx = self.items.len() as u32;
        self.items.push(id.to_string());
        self.item_lookup.insert(id.to_string(), idx);
        idx
    }

    pub fn add(&mut self, user: &str, item: &str, rating: i32) -> Result<()> {
        if !self.scale.contains(rating) {
            return Err(Error::RatingOutOfRange {
                value: rating,
                min: self.scale.min,
                max: self.scale.max,
            });
        }
        let u = self.intern_user(user);
        let i = self.intern_item(item);
        self.cells.insert((u, i), rating);
        Ok(())
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn build(self) -> RatingMatrix {
        // Canonical order: ids ascending. Remap the interned indices.
        let mut user_order: Vec<u32> = (0..self.users.len() as u32).collect();
        user_order.sort_by(|&a, &b| self.users[a as usize].cmp(&self.users[b as usize]));
        let mut item_order: Vec<u32> = (0..self.items.len() as u32).collect();
        item_order.sort_by(|&a, &b| self.items[a as usize].cmp(&self.items[b as usize]));

        let mut user_rank = vec![0u32; self.users.len()];
        for (rank, &old) in user_order.iter().enumerate() {
            user_rank[old as usize] = rank as u32;
        }
        let mut item_rank = vec![0u32; self.items.len()];
        for (rank, &old) in item_order.iter().enumerate() {
            item_rank[old as usize] = rank as u32;
        }

        let users: Vec<UserId> = user_order
            .iter()
            .map(|&o| self.users[o as usize].clone())
            .collect();
        let items: Vec<ItemId> = item_order
            .iter()
            .map(|&o| self.items[o as usize].clone())
            .collect();

        let mut rows: Vec<Vec<(u32, i32)>> = vec![Vec::new(); users.len()];
        let mut raters: Vec<Vec<u32>> = vec![Vec::new(); items.len()];
        let n_ratings = self.cells.len();
        for (&(u, i), &r) in &self.cells {
            let u = user_rank[u as usize];
            let i = item_rank[i as usize];
            rows[u as usize].push((i, r));
            raters[i as usize].push(u);
        }
        for row in &mut rows {
            row.sort_unstable_by_key(|&(i, _)| i);
        }
        for list in &mut raters {
            list.sort_unstable();
        }

        let user_lookup = users
            .iter()
            .enumerate()
            .map(|(i, id)| (id.clone(), i as u32))
            .collect();
        let item_lookup = items
            .iter()
            .enumerate()
            .map(|(i, id)| (id.clone(), i as u32))
            .collect();

        RatingMatrix {
            scale: self.scale,
            users,
            items,
            user_lookup,
            item_lookup,
            rows,
            raters,
            n_ratings,
        }
    }
}

fn open_reader(path: &Path, delimiter: u8) -> Result<csv::Reader<BufReader<File>>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .has_headers(true)
        .flexible(true)
        .from_reader(BufReader::new(file)))
}

fn field(record: &csv::ByteRecord, idx: usize) -> Option<String> {
    record
        .get(idx)
        .map(|b| String::from_utf8_lossy(b).trim().to_string())
}

fn row_line(record: &csv::ByteRecord) -> u64 {
    record.position().map(|p| p.line()).unwrap_or(0)
}

/// Load a rating file into a 1..10 matrix.
///
/// Book-Crossing implicit ratings (0) are dropped; HetRec half-point ratings
/// are doubled and rounded onto the integer 1..10 range. Duplicate
/// (user, item) rows keep the last occurrence.
pub fn load_ratings(path: &Path, format: InputFormat) -> Result<RatingMatrix> {
    let scale = RatingScale::ONE_TO_TEN;
    let mut builder = RatingMatrixBuilder::new(scale);
    match format {
        InputFormat::Bookcrossing => {
            let mut reader = open_reader(path, b';')?;
            let mut record = csv::ByteRecord::new();
            loop {
                match reader.read_byte_record(&mut record) {
                    Ok(false) => break,
                    Ok(true) => {}
                    Err(e) => return Err(Error::csv(path, e)),
                }
                let line = row_line(&record);
                if record.len() < 3 {
                    return Err(Error::MalformedRow {
                        path: path.into(),
                        line,
                        message: format!("expected 3 fields, got {}", record.len()),
                    });
                }
                let user = field(&record, 0).unwrap_or_default();
                let item = field(&record, 1).unwrap_or_default();
                let raw = field(&record, 2).unwrap_or_default();
                let value: i64 = raw.parse().map_err(|_| Error::MalformedRow {
                    path: path.into(),
                    line,
                    message: format!("rating `{raw}` is not an integer"),
                })?;
                if value == 0 {
                    continue; // implicit feedback
                }
                if value < scale.min as i64 || value > scale.max as i64 {
                    return Err(Error::RatingOutOfScale {
                        path: path.into(),
                        line,
                        value,
                        min: scale.min,
                        max: scale.max,
                    });
                }
                builder.add(&user, &item, value as i32)?;
            }
        }
        InputFormat::Hetrec => {
            let mut reader = open_reader(path, b'\t')?;
            let headers = reader
                .byte_headers()
                .map_err(|e| Error::csv(path, e))?
                .clone();
            let col = |name: &str| -> Result<usize> {
                headers
                    .iter()
                    .position(|h| String::from_utf8_lossy(h).trim() == name)
                    .ok_or_else(|| Error::MalformedRow {
                        path: path.into(),
                        line: 1,
                        message: format!("missing column `{name}`"),
                    })
            };
            let user_col = col("userID")?;
            let item_col = col("movieID")?;
            let rating_col = col("rating")?;
            let mut record = csv::ByteRecord::new();
            loop {
                match reader.read_byte_record(&mut record) {
                    Ok(false) => break,
                    Ok(true) => {}
                    Err(e) => return Err(Error::csv(path, e)),
                }
                let line = row_line(&record);
                let missing = |name: &str| Error::MalformedRow {
                    path: path.into(),
                    line,
                    message: format!("missing `{name}` field"),
                };
                let user = field(&record, user_col).ok_or_else(|| missing("userID"))?;
                let item = field(&record, item_col).ok_or_else(|| missing("movieID"))?;
                let raw = field(&record, rating_col).ok_or_else(|| missing("rating"))?;
                let value: f64 = raw.parse().map_err(|_| Error::MalformedRow {
                    path: path.into(),
                    line,
                    message: format!("rating `{raw}` is not a number"),
                })?;
                // 0.5..5.0 half-point scale onto 1..10.
                let rescaled = (value * 2.0).round() as i64;
                if rescaled < scale.min as i64 || rescaled > scale.max as i64 {
                    return Err(Error::RatingOutOfScale {
                        path: path.into(),
                        line,
                        value: rescaled,
                        min: scale.min,
                        max: scale.max,
                    });
                }
                builder.add(&user, &item, rescaled as i32)?;
            }
        }
        InputFormat::GenericCsv => {
            let mut reader = open_reader(path, b',')?;
            let mut record = csv::ByteRecord::new();
            loop {
                match reader.read_byte_record(&mut record) {
                    Ok(false) => break,
                    Ok(true) => {}
                    Err(e) => return Err(Error::csv(path, e)),
                }
                let line = row_line(&record);
                if record.len() < 3 {
                    return Err(Error::MalformedRow {
                        path: path.into(),
                        line,
                        message: format!("expected 3 fields, got {}", record.len()),
                    });
                }
                let user = field(&record, 0).unwrap_or_default();
                let item = field(&record, 1).unwrap_or_default();
                let raw = field(&record, 2).unwrap_or_default();
                let value: i64 = raw.parse().map_err(|_| Error::MalformedRow {
                    path: path.into(),
                    line,
                    message: format!("rating `{raw}` is not an integer"),
                })?;
                if value < scale.min as i64 || value > scale.max as i64 {
                    return Err(Error::RatingOutOfScale {
                        path: path.into(),
                        line,
                        value,
                        min: scale.min,
                        max: scale.max,
                    });
                }
                builder.add(&user, &item, value as i32)?;
            }
        }
    }
    if builder.is_empty() {
        return Err(Error::EmptyDataset { path: path.into() });
    }
    Ok(builder.build())
}

/// Uniform sample of `n` users without replacement, deterministic per seed.
///
/// The item universe of the result is restricted to items rated by at least
/// one sampled user.
pub fn sample_genuine(m: &RatingMatrix, n: usize, seed: u64) -> Result<RatingMatrix> {
    if n > m.n_users() {
        return Err(Error::SampleTooLarge {
            requested: n,
            available: m.n_users(),
        });
    }
    if n == 0 {
        return Err(Error::Config("sample size must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let chosen = rand::seq::index::sample(&mut rng, m.n_users(), n);
    let mut builder = RatingMatrixBuilder::new(m.scale());
    for u in chosen.iter() {
        for &(i, r) in m.user_ratings(u) {
            builder.add(m.user_id(u), m.item_id(i as usize), r)?;
        }
    }
    Ok(builder.build())
}

/// Per-item and system-wide rating statistics.
///
/// Standard deviations are population (divide by N). Items with zero raters
/// fall back to the system mean/std with a rater count of 0, which keeps the
/// attack generators total after sampling.
#[derive(Debug, Clone)]
pub struct ItemStats {
    item_mean: Vec<f64>,
    item_std: Vec<f64>,
    rater_count: Vec<u32>,
    system_mean: f64,
    system_std: f64,
}

impl ItemStats {
    pub fn item_mean(&self, item_index: usize) -> f64 {
        self.item_mean[item_index]
    }

    pub fn item_std(&self, item_index: usize) -> f64 {
        self.item_std[item_index]
    }

    /// PoI: the number of users who rated the item.
    pub fn rater_count(&self, item_index: usize) -> u32 {
        self.rater_count[item_index]
    }

    pub fn rater_counts(&self) -> &[u32] {
        &self.rater_count
    }

    pub fn system_mean(&self) -> f64 {
        self.system_mean
    }

    pub fn system_std(&self) -> f64 {
        self.system_std
    }

    pub fn n_items(&self) -> usize {
        self.item_mean.len()
    }
}

/// Means and population stds over the stored ratings of each item.
pub fn compute_item_stats(m: &RatingMatrix) -> Result<ItemStats> {
    if m.n_ratings() == 0 {
        return Err(Error::EmptyMatrix);
    }
    let n_items = m.n_items();
    let mut sum = vec![0.0f64; n_items];
    let mut sum_sq = vec![0.0f64; n_items];
    let mut count = vec![0u32; n_items];
    let mut total = 0.0f64;
    let mut total_sq = 0.0f64;
    for (_, i, r) in m.iter_ratings() {
        let r = r as f64;
        sum[i] += r;
        sum_sq[i] += r * r;
        count[i] += 1;
        total += r;
        total_sq += r * r;
    }
    let n_total = m.n_ratings() as f64;
    let system_mean = total / n_total;
    let system_std = (total_sq / n_total - system_mean * system_mean).max(0.0).sqrt();

    let mut item_mean = vec![0.0f64; n_items];
    let mut item_std = vec![0.0f64; n_items];
    for i in 0..n_items {
        if count[i] == 0 {
            item_mean[i] = system_mean;
            item_std[i] = system_std;
        } else {
            let n = count[i] as f64;
            let mean = sum[i] / n;
            item_mean[i] = mean;
            item_std[i] = (sum_sq[i] / n - mean * mean).max(0.0).sqrt();
        }
    }
    Ok(ItemStats {
        item_mean,
        item_std,
        rater_count: count,
        system_mean,
        system_std,
    })
}

/// Ground-truth partition of users into genuine profiles and attackers.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserLabelSet {
    genuine: BTreeSet<UserId>,
    attackers: BTreeSet<UserId>,
}

impl UserLabelSet {
    pub fn new(genuine: BTreeSet<UserId>, attackers: BTreeSet<UserId>) -> Result<Self> {
        if let Some(dup) = genuine.intersection(&attackers).next() {
            return Err(Error::Config(format!(
                "user `{dup}` labeled both genuine and attacker"
            )));
        }
        Ok(UserLabelSet { genuine, attackers })
    }

    pub fn genuine(&self) -> &BTreeSet<UserId> {
        &self.genuine
    }

    pub fn attackers(&self) -> &BTreeSet<UserId> {
        &self.attackers
    }

    pub fn is_attacker(&self, user: &str) -> bool {
        self.attackers.contains(user)
    }

    pub fn len(&self) -> usize {
        self.genuine.len() + self.attackers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.genuine.is_empty() && self.attackers.is_empty()
    }

    /// `user_id,label` rows, label in {genuine, attacker}, sorted by user id.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = BufWriter::new(file);
        writeln!(out, "user_id,label").map_err(|e| Error::io(path, e))?;
        let mut rows: Vec<(&UserId, &str)> = self
            .genuine
            .iter()
            .map(|u| (u, "genuine"))
            .chain(self.attackers.iter().map(|u| (u, "attacker")))
            .collect();
        rows.sort();
        for (user, label) in rows {
            writeln!(out, "{user},{label}").map_err(|e| Error::io(path, e))?;
        }
        out.flush().map_err(|e| Error::io(path, e))?;
        Ok(())
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let mut reader = open_reader(path, b',')?;
        let mut genuine = BTreeSet::new();
        let mut attackers = BTreeSet::new();
        let mut record = csv::ByteRecord::new();
        loop {
            match reader.read_byte_record(&mut record) {
                Ok(false) => break,
                Ok(true) => {}
                Err(e) => return Err(Error::csv(path, e)),
            }
            let line = row_line(&record);
            if record.len() < 2 {
                return Err(Error::MalformedRow {
                    path: path.into(),
                    line,
                    message: format!("expected 2 fields, got {}", record.len()),
                });
            }
            let user = field(&record, 0).unwrap_or_default();
            let label = field(&record, 1).unwrap_or_default();
            match label.as_str() {
                "genuine" => genuine.insert(user),
                "attacker" => attackers.insert(user),
                other => {
                    return Err(Error::MalformedRow {
                        path: path.into(),
                        line,
                        message: format!("unknown label `{other}`"),
                    })
                }
            };
        }
        UserLabelSet::new(genuine, attackers)
    }
}
