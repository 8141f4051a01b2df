//! Interaction and social-graph ingestion, entity indexing, the chronological
//! train/validation/test split, per-entity event sequences and the sparse
//! training rating matrix.

use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};

/// One `(user, item, rating, timestamp)` event.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct InteractionRecord {
    pub user: usize,
    pub item: usize,
    pub rating: i64,
    pub timestamp: i64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(Error::Validation(format!(
                "unknown split '{other}' (expected train, val or test)"
            ))),
        }
    }
}

/// The ordered set of admissible rating values. Rating 0 is reserved for
/// "no interaction" and is never part of a scale.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RatingScale(Vec<i64>);

impl RatingScale {
    pub fn new(values: impl IntoIterator<Item = i64>) -> Result<Self> {
        let mut v: Vec<i64> = values.into_iter().collect();
        v.sort_unstable();
        v.dedup();
        if v.is_empty() {
            return Err(Error::Validation("rating scale is empty".into()));
        }
        if v.contains(&0) {
            return Err(Error::Validation(
                "rating 0 is reserved for unknown interactions".into(),
            ));
        }
        Ok(RatingScale(v))
    }

    /// Explicit 1..=5 star ratings.
    pub fn five_star() -> Self {
        RatingScale((1..=5).collect())
    }

    /// Implicit feedback: every observed interaction is a 1.
    pub fn implicit() -> Self {
        RatingScale(vec![1])
    }

    pub fn values(&self) -> &[i64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn index_of(&self, rating: i64) -> Option<usize> {
        self.0.binary_search(&rating).ok()
    }

    pub fn min(&self) -> f64 {
        self.0[0] as f64
    }

    pub fn max(&self) -> f64 {
        self.0[self.0.len() - 1] as f64
    }
}

impl fmt::Display for RatingScale {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(i64::to_string).collect();
        f.write_str(&parts.join(","))
    }
}

impl FromStr for RatingScale {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let values = s
            .split(',')
            .map(|p| {
                p.trim()
                    .parse::<i64>()
                    .map_err(|_| Error::Validation(format!("bad rating value '{p}' in scale")))
            })
            .collect::<Result<Vec<_>>>()?;
        RatingScale::new(values)
    }
}

/// Raw string id ↔ dense index table, in first-seen order.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct IdMap {
    raw: Vec<String>,
    index: HashMap<String, usize>,
}

impl IdMap {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn intern(&mut self, raw: &str) -> usize {
        if let Some(&i) = self.index.get(raw) {
            return i;
        }
        let i = self.raw.len();
        self.raw.push(raw.to_string());
        self.index.insert(raw.to_string(), i);
        i
    }

    pub fn get(&self, raw: &str) -> Option<usize> {
        self.index.get(raw).copied()
    }

    pub fn raw(&self, index: usize) -> &str {
        &self.raw[index]
    }

    pub fn len(&self) -> usize {
        self.raw.len()
    }

    pub fn is_empty(&self) -> bool {
        self.raw.is_empty()
    }

    /// Keep only indices with `keep[i]`, renumbering densely in the existing order.
    fn retain(&self, keep: &[bool]) -> (IdMap, Vec<Option<usize>>) {
        let mut out = IdMap::new();
        let remap = self
            .raw
            .iter()
            .zip(keep)
            .map(|(r, &k)| k.then(|| out.intern(r)))
            .collect();
        (out, remap)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParsedInteractions {
    pub records: Vec<InteractionRecord>,
    pub users: IdMap,
    pub items: IdMap,
}

fn read_lines(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))
}

fn data_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim_end_matches('\r')))
        .filter(|(_, l)| !l.trim().is_empty() && !l.starts_with('#'))
}

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        msg: msg.into(),
    }
}

/// Parse `user<TAB>item<TAB>rating<TAB>timestamp` lines. Raw ids are mapped
/// to dense indices in first-seen order.
pub fn parse_interactions(path: &Path, scale: &RatingScale) -> Result<ParsedInteractions> {
    let text = read_lines(path)?;
    parse_interactions_str(&text, path, scale)
}

pub(crate) fn parse_interactions_str(
    text: &str,
    path: &Path,
    scale: &RatingScale,
) -> Result<ParsedInteractions> {
    let mut users = IdMap::new();
    let mut items = IdMap::new();
    let mut records = Vec::new();
    for (lineno, line) in data_lines(text) {
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 4 {
            return Err(parse_err(
                path,
                lineno,
                format!("expected 4 tab-separated fields, found {}", fields.len()),
            ));
        }
        let rating: i64 = fields[2]
            .trim()
            .parse()
            .map_err(|_| parse_err(path, lineno, format!("bad rating '{}'", fields[2])))?;
        let timestamp: i64 = fields[3]
            .trim()
            .parse()
            .map_err(|_| parse_err(path, lineno, format!("bad timestamp '{}'", fields[3])))?;
        if scale.index_of(rating).is_none() {
            return Err(Error::Validation(format!(
                "{}:{}: rating {} is outside the declared scale {{{}}}",
                path.display(),
                lineno,
                rating,
                scale
            )));
        }
        records.push(InteractionRecord {
            user: users.intern(fields[0].trim()),
            item: items.intern(fields[1].trim()),
            rating,
            timestamp,
        });
    }
    Ok(ParsedInteractions {
        records,
        users,
        items,
    })
}

/// Parse `user<TAB>user` edges against known users and return a symmetric,
/// sorted, de-duplicated adjacency without self-loops.
pub fn parse_social(path: &Path, users: &IdMap) -> Result<Vec<Vec<usize>>> {
    let text = read_lines(path)?;
    parse_social_str(&text, path, users)
}

pub(crate) fn parse_social_str(text: &str, path: &Path, users: &IdMap) -> Result<Vec<Vec<usize>>> {
    let mut edges = Vec::new();
    for (lineno, line) in data_lines(text) {
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 2 {
            return Err(parse_err(
                path,
                lineno,
                format!("expected 2 tab-separated fields, found {}", fields.len()),
            ));
        }
        let mut ends = [0usize; 2];
        for (slot, raw) in ends.iter_mut().zip(&fields) {
            *slot = users.get(raw.trim()).ok_or_else(|| {
                Error::Validation(format!(
                    "{}:{}: unknown user '{}' in social graph",
                    path.display(),
                    lineno,
                    raw.trim()
                ))
            })?;
        }
        edges.push((ends[0], ends[1]));
    }
    Ok(symmetric_adjacency(users.len(), &edges))
}

pub fn symmetric_adjacency(n: usize, edges: &[(usize, usize)]) -> Vec<Vec<usize>> {
    let mut adj = vec![Vec::new(); n];
    for &(a, b) in edges {
        if a != b {
            adj[a].push(b);
            adj[b].push(a);
        }
    }
    for list in &mut adj {
        list.sort_unstable();
        list.dedup();
    }
    adj
}

/// Default train/validation/test proportions.
pub const DEFAULT_RATIOS: [f64; 3] = [0.8, 0.1, 0.1];

/// Sort globally by `(timestamp, user, item)` and cut at `⌊N·r₀⌋` and
/// `⌊N·(r₀+r₁)⌋`. Labels are returned aligned with the input order.
pub fn chronological_split(records: &[InteractionRecord], ratios: [f64; 3]) -> Result<Vec<Split>> {
    if ratios.iter().any(|r| !(0.0..=1.0).contains(r))
        || (ratios.iter().sum::<f64>() - 1.0).abs() > 1e-9
    {
        return Err(Error::Validation(format!(
            "split ratios {ratios:?} must be non-negative and sum to 1"
        )));
    }
    let n = records.len();
    if n < 3 {
        return Err(Error::Validation(format!(
            "need at least 3 interactions to split, found {n}"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by_key(|&i| {
        let r = &records[i];
        (r.timestamp, r.user, r.item, i)
    });
    let cut = |r: f64| ((n as f64) * r + 1e-9).floor() as usize;
    let train_end = cut(ratios[0]).min(n);
    let val_end = cut(ratios[0] + ratios[1]).clamp(train_end, n);
    let mut labels = vec![Split::Test; n];
    for (pos, &i) in order.iter().enumerate() {
        labels[i] = if pos < train_end {
            Split::Train
        } else if pos < val_end {
            Split::Val
        } else {
            Split::Test
        };
    }
    Ok(labels)
}

/// One entry of a per-entity event sequence. `other` is the counterpart
/// (the item for a user sequence, the user for an item sequence).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SeqEvent {
    pub other: usize,
    pub rating_idx: usize,
    pub timestamp: i64,
}

/// Events strictly before `before`, keeping at most the `max_len` most recent.
pub fn consumable(seq: &[SeqEvent], before: i64, max_len: usize) -> &[SeqEvent] {
    let end = seq.partition_point(|e| e.timestamp < before);
    &seq[end.saturating_sub(max_len)..end]
}

/// Per-user and per-item timestamp-ascending training sequences.
pub fn build_sequences(
    records: &[InteractionRecord],
    split: &[Split],
    scale: &RatingScale,
    n_users: usize,
    n_items: usize,
) -> (Vec<Vec<SeqEvent>>, Vec<Vec<SeqEvent>>) {
    let mut user_seqs = vec![Vec::new(); n_users];
    let mut item_seqs = vec![Vec::new(); n_items];
    for (r, s) in records.iter().zip(split) {
        if *s != Split::Train {
            continue;
        }
        let rating_idx = scale
            .index_of(r.rating)
            .expect("rating validated at parse time");
        user_seqs[r.user].push(SeqEvent {
            other: r.item,
            rating_idx,
            timestamp: r.timestamp,
        });
        item_seqs[r.item].push(SeqEvent {
            other: r.user,
            rating_idx,
            timestamp: r.timestamp,
        });
    }
    for seq in user_seqs.iter_mut().chain(item_seqs.iter_mut()) {
        seq.sort_by_key(|e| (e.timestamp, e.other));
    }
    (user_seqs, item_seqs)
}

/// Column-major sparse ratings built from training interactions only.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseRatingMatrix {
    pub n_users: usize,
    /// `columns[j]` holds `(user, rating)` sorted by user.
    pub columns: Vec<Vec<(usize, f64)>>,
}

impl SparseRatingMatrix {
    pub fn n_items(&self) -> usize {
        self.columns.len()
    }

    pub fn column(&self, j: usize) -> &[(usize, f64)] {
        &self.columns[j]
    }
}

/// Latest-timestamp rating per `(user, item)` over the training split.
pub fn build_rating_matrix(
    records: &[InteractionRecord],
    split: &[Split],
    n_users: usize,
    n_items: usize,
) -> SparseRatingMatrix {
    let mut train: Vec<(usize, &InteractionRecord)> = records
        .iter()
        .enumerate()
        .filter(|(i, _)| split[*i] == Split::Train)
        .collect();
    train.sort_by_key(|(i, r)| (r.timestamp, *i));
    let mut latest: HashMap<(usize, usize), i64> = HashMap::new();
    for (_, r) in train {
        latest.insert((r.user, r.item), r.rating);
    }
    let mut columns = vec![Vec::new(); n_items];
    for ((u, j), r) in latest {
        columns[j].push((u, r as f64));
    }
    for col in &mut columns {
        col.sort_by_key(|e| e.0);
    }
    SparseRatingMatrix { n_users, columns }
}

/// Counts in the layout of a dataset statistics table.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DatasetStats {
    pub users: usize,
    pub items: usize,
    pub events: usize,
    pub social_links: usize,
}

/// The indexed corpus. Immutable once built.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub n_users: usize,
    pub n_items: usize,
    pub interactions: Vec<InteractionRecord>,
    pub rating_scale: RatingScale,
    pub ratios: [f64; 3],
    pub social_adj: Vec<Vec<usize>>,
    pub user_seqs: Vec<Vec<SeqEvent>>,
    pub item_seqs: Vec<Vec<SeqEvent>>,
    pub split: Vec<Split>,
    pub users: IdMap,
    pub items: IdMap,
    /// All items each user interacted with, in any split, sorted.
    pub user_items: Vec<Vec<usize>>,
}

impl Dataset {
    /// Index, prune and split a parsed corpus.
    ///
    /// Users without a social link and users/items without a training
    /// interaction are removed together with their events. Removal can strip
    /// other entities of their last link or training event, so pruning and
    /// splitting repeat until nothing changes; the final split is exactly
    /// the chronological split of the surviving events.
    pub fn build(
        parsed: ParsedInteractions,
        social_adj: Vec<Vec<usize>>,
        scale: RatingScale,
        ratios: [f64; 3],
    ) -> Result<Dataset> {
        let ParsedInteractions {
            records,
            users,
            items,
        } = parsed;
        if social_adj.len() != users.len() {
            return Err(Error::Validation(format!(
                "social adjacency covers {} users but {} are indexed",
                social_adj.len(),
                users.len()
            )));
        }
        let mut keep_user = vec![true; users.len()];
        let mut keep_item = vec![true; items.len()];
        let (kept, split) = loop {
            let kept: Vec<InteractionRecord> = records
                .iter()
                .filter(|r| keep_user[r.user] && keep_item[r.item])
                .copied()
                .collect();
            let mut changed = false;
            let mut seen_user = vec![false; users.len()];
            for r in &kept {
                seen_user[r.user] = true;
            }
            for u in 0..users.len() {
                let linked = social_adj[u].iter().any(|&v| keep_user[v] && seen_user[v]);
                if keep_user[u] && (!seen_user[u] || !linked) {
                    keep_user[u] = false;
                    changed = true;
                }
            }
            if changed {
                continue;
            }
            let split = chronological_split(&kept, ratios)?;
            let mut train_user = vec![false; users.len()];
            let mut train_item = vec![false; items.len()];
            for (r, s) in kept.iter().zip(&split) {
                if *s == Split::Train {
                    train_user[r.user] = true;
                    train_item[r.item] = true;
                }
            }
            for r in &kept {
                if !train_user[r.user] {
                    keep_user[r.user] = false;
                    changed = true;
                }
                if !train_item[r.item] {
                    keep_item[r.item] = false;
                    changed = true;
                }
            }
            if !changed {
                break (kept, split);
            }
        };

        let mut used_item = vec![false; items.len()];
        for r in &kept {
            used_item[r.item] = true;
        }
        let used_user: Vec<bool> = keep_user.clone();
        let (users, user_remap) = users.retain(&used_user);
        let (items, item_remap) = items.retain(&used_item);
        let interactions: Vec<InteractionRecord> = kept
            .iter()
            .map(|r| InteractionRecord {
                user: user_remap[r.user].unwrap(),
                item: item_remap[r.item].unwrap(),
                ..*r
            })
            .collect();
        let mut adj = vec![Vec::new(); users.len()];
        for (old, list) in social_adj.iter().enumerate() {
            if let Some(u) = user_remap[old] {
                adj[u] = list.iter().filter_map(|&v| user_remap[v]).collect();
                adj[u].sort_unstable();
            }
        }
        Dataset::assemble(interactions, split, adj, scale, ratios, users, items)
    }

    fn assemble(
        interactions: Vec<InteractionRecord>,
        split: Vec<Split>,
        social_adj: Vec<Vec<usize>>,
        rating_scale: RatingScale,
        ratios: [f64; 3],
        users: IdMap,
        items: IdMap,
    ) -> Result<Dataset> {
        let (n_users, n_items) = (users.len(), items.len());
        let (user_seqs, item_seqs) =
            build_sequences(&interactions, &split, &rating_scale, n_users, n_items);
        let mut user_items = vec![Vec::new(); n_users];
        for r in &interactions {
            user_items[r.user].push(r.item);
        }
        for l in &mut user_items {
            l.sort_unstable();
            l.dedup();
        }
        Ok(Dataset {
            n_users,
            n_items,
            interactions,
            rating_scale,
            ratios,
            social_adj,
            user_seqs,
            item_seqs,
            split,
            users,
            items,
            user_items,
        })
    }

    /// Parse both raw files and build the dataset.
    pub fn from_files(
        interactions: &Path,
        social: &Path,
        scale: RatingScale,
        ratios: [f64; 3],
    ) -> Result<Dataset> {
        let parsed = parse_interactions(interactions, &scale)?;
        let adj = parse_social(social, &parsed.users)?;
        Dataset::build(parsed, adj, scale, ratios)
    }

    pub fn stats(&self) -> DatasetStats {
        DatasetStats {
            users: self.n_users,
            items: self.n_items,
            events: self.interactions.len(),
            social_links: self.social_adj.iter().map(Vec::len).sum::<usize>() / 2,
        }
    }

    pub fn rating_matrix(&self) -> SparseRatingMatrix {
        build_rating_matrix(&self.interactions, &self.split, self.n_users, self.n_items)
    }

    /// Records of one split, in file order.
    pub fn records(&self, split: Split) -> Vec<InteractionRecord> {
        self.interactions
            .iter()
            .zip(&self.split)
            .filter(|(_, s)| **s == split)
            .map(|(r, _)| *r)
            .collect()
    }

    pub fn split_sizes(&self) -> [usize; 3] {
        let mut out = [0; 3];
        for s in &self.split {
            out[*s as usize] += 1;
        }
        out
    }

    pub fn rating_index(&self, rating: i64) -> Option<usize> {
        self.rating_scale.index_of(rating)
    }

    /// Write the processed layout: `meta`, `interactions.tsv`, `social.tsv`,
    /// `users.map` and `items.map`.
    pub fn export(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(format!("creating {}", dir.display()), e))?;
        let st = self.stats();
        let meta = format!(
            "n_users\t{}\nn_items\t{}\nn_interactions\t{}\nn_social_links\t{}\nrating_scale\t{}\nratios\t{},{},{}\n",
            st.users,
            st.items,
            st.events,
            st.social_links,
            self.rating_scale,
            self.ratios[0],
            self.ratios[1],
            self.ratios[2]
        );
        write_file(&dir.join(META_FILE), meta.as_bytes())?;

        let mut buf = String::from("# user\titem\trating\ttimestamp\tsplit\n");
        for (r, s) in self.interactions.iter().zip(&self.split) {
            buf.push_str(&format!(
                "{}\t{}\t{}\t{}\t{}\n",
                r.user, r.item, r.rating, r.timestamp, s
            ));
        }
        write_file(&dir.join(INTERACTIONS_FILE), buf.as_bytes())?;

        let mut buf = String::new();
        for (u, list) in self.social_adj.iter().enumerate() {
            for &v in list.iter().filter(|&&v| v > u) {
                buf.push_str(&format!("{u}\t{v}\n"));
            }
        }
        write_file(&dir.join(SOCIAL_FILE), buf.as_bytes())?;

        for (name, map) in [(USERS_MAP, &self.users), (ITEMS_MAP, &self.items)] {
            let mut buf = String::new();
            for i in 0..map.len() {
                buf.push_str(&format!("{}\t{}\n", map.raw(i), i));
            }
            write_file(&dir.join(name), buf.as_bytes())?;
        }
        Ok(())
    }

    /// Read a directory written by [`Dataset::export`].
    pub fn load(dir: &Path) -> Result<Dataset> {
        let meta = read_kv(&dir.join(META_FILE))?;
        let get = |k: &str| {
            meta.get(k)
                .ok_or_else(|| Error::Validation(format!("{}: missing key '{k}'", META_FILE)))
        };
        let scale: RatingScale = get("rating_scale")?.parse()?;
        let ratio_vals: Vec<f64> = get("ratios")?
            .split(',')
            .map(|v| v.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::Validation("bad ratios in meta".into()))?;
        let ratios: [f64; 3] = ratio_vals
            .try_into()
            .map_err(|_| Error::Validation("ratios must have three values".into()))?;

        let users = read_map(&dir.join(USERS_MAP))?;
        let items = read_map(&dir.join(ITEMS_MAP))?;

        let path = dir.join(INTERACTIONS_FILE);
        let text = read_lines(&path)?;
        let mut interactions = Vec::new();
        let mut split = Vec::new();
        for (lineno, line) in data_lines(&text) {
            let f: Vec<&str> = line.split('\t').collect();
            if f.len() != 5 {
                return Err(parse_err(&path, lineno, "expected 5 fields"));
            }
            let num = |s: &str| {
                s.parse::<i64>()
                    .map_err(|_| parse_err(&path, lineno, format!("bad number '{s}'")))
            };
            let (user, item) = (num(f[0])? as usize, num(f[1])? as usize);
            if user >= users.len() || item >= items.len() {
                return Err(parse_err(&path, lineno, "index out of range"));
            }
            let rating = num(f[2])?;
            if scale.index_of(rating).is_none() {
                return Err(parse_err(
                    &path,
                    lineno,
                    format!("rating {rating} outside scale"),
                ));
            }
            interactions.push(InteractionRecord {
                user,
                item,
                rating,
                timestamp: num(f[3])?,
            });
            split.push(f[4].parse()?);
        }

        let path = dir.join(SOCIAL_FILE);
        let text = read_lines(&path)?;
        let mut edges = Vec::new();
        for (lineno, line) in data_lines(&text) {
            let f: Vec<usize> = line
                .split('\t')
                .map(|s| s.parse::<usize>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| parse_err(&path, lineno, "bad user index"))?;
            if f.len() != 2 || f.iter().any(|&u| u >= users.len()) {
                return Err(parse_err(&path, lineno, "expected two valid user indices"));
            }
            edges.push((f[0], f[1]));
        }
        let adj = symmetric_adjacency(users.len(), &edges);
        Dataset::assemble(interactions, split, adj, scale, ratios, users, items)
    }
}

pub const META_FILE: &str = "meta";
pub const INTERACTIONS_FILE: &str = "interactions.tsv";
pub const SOCIAL_FILE: &str = "social.tsv";
pub const USERS_MAP: &str = "users.map";
pub const ITEMS_MAP: &str = "items.map";

/// Create or truncate `path` and write `bytes`.
pub fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut f =
        fs::File::create(path).map_err(|e| Error::io(format!("creating {}", path.display()), e))?;
    f.write_all(bytes)
        .map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

/// Read a flat `key<TAB>value` file, skipping blank and `#` lines.
pub fn read_kv(path: &Path) -> Result<HashMap<String, String>> {
    let text = read_lines(path)?;
    let mut out = HashMap::new();
    for (lineno, line) in data_lines(&text) {
        let (k, v) = line
            .split_once('\t')
            .ok_or_else(|| parse_err(path, lineno, "expected key<TAB>value"))?;
        out.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(out)
}

fn read_map(path: &Path) -> Result<IdMap> {
    let text = read_lines(path)?;
    let mut map = IdMap::new();
    for (lineno, line) in data_lines(&text) {
        let (raw, idx) = line
            .rsplit_once('\t')
            .ok_or_else(|| parse_err(path, lineno, "expected raw_id<TAB>index"))?;
        let idx: usize = idx
            .parse()
            .map_err(|_| parse_err(path, lineno, format!("bad index '{idx}'")))?;
        if map.intern(raw) != idx {
            return Err(parse_err(
                path,
                lineno,
                "indices must be dense and in order",
            ));
        }
    }
    Ok(map)
}
