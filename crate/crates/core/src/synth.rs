//! Small synthetic corpora with planted structure, for smoke tests and
//! sanity checks of the learning pipeline.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::data::{
    parse_interactions_str, parse_social_str, write_file, Dataset, RatingScale, DEFAULT_RATIOS,
};
use crate::error::Result;

/// Raw interaction and social rows, with users named `u<i>` and items `i<j>`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Corpus {
    /// `(user, item, rating, timestamp)`.
    pub interactions: Vec<(usize, usize, i64, i64)>,
    pub social: Vec<(usize, usize)>,
}

impl Corpus {
    pub fn interactions_tsv(&self) -> String {
        let mut s = String::new();
        for (u, i, r, t) in &self.interactions {
            let _ = writeln!(s, "u{u}\ti{i}\t{r}\t{t}");
        }
        s
    }

    pub fn social_tsv(&self) -> String {
        let mut s = String::new();
        for (a, b) in &self.social {
            let _ = writeln!(s, "u{a}\tu{b}");
        }
        s
    }

    /// Write `interactions.tsv` and `social.tsv` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<(PathBuf, PathBuf)> {
        let (ip, sp) = (dir.join("interactions.tsv"), dir.join("social.tsv"));
        write_file(&ip, self.interactions_tsv().as_bytes())?;
        write_file(&sp, self.social_tsv().as_bytes())?;
        Ok((ip, sp))
    }

    /// Build the dataset with the default 80/10/10 split.
    pub fn dataset(&self, scale: RatingScale) -> Result<Dataset> {
        let origin = Path::new("<synthetic>");
        let parsed = parse_interactions_str(&self.interactions_tsv(), origin, &scale)?;
        let adj = parse_social_str(&self.social_tsv(), origin, &parsed.users)?;
        Dataset::build(parsed, adj, scale, DEFAULT_RATIOS)
    }
}

/// 1..=5 ratings from a rank-one preference model,
/// `round(1 + 4·a_u·b_v + ε)` with `a, b ~ U(0, 1)` and `ε ~ N(0, noise_sd²)`.
/// Each user rates `per_user` distinct items at random times and is linked
/// to the users with the nearest preference factor.
pub fn rank_one_ratings(
    n_users: usize,
    n_items: usize,
    per_user: usize,
    noise_sd: f64,
    seed: u64,
) -> Corpus {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a: Vec<f64> = (0..n_users).map(|_| rng.gen_range(0.0..1.0)).collect();
    let b: Vec<f64> = (0..n_items).map(|_| rng.gen_range(0.0..1.0)).collect();
    let noise = Normal::new(0.0, noise_sd).expect("finite noise scale");
    let mut rows = Vec::new();
    for u in 0..n_users {
        let mut items: Vec<usize> = (0..n_items).collect();
        items.shuffle(&mut rng);
        for &v in items.iter().take(per_user.min(n_items)) {
            let r = (1.0 + 4.0 * a[u] * b[v] + noise.sample(&mut rng)).round();
            rows.push((u, v, r.clamp(1.0, 5.0) as i64));
        }
    }
    let mut times: Vec<i64> = (0..rows.len() as i64).collect();
    times.shuffle(&mut rng);
    let interactions = rows
        .into_iter()
        .zip(times)
        .map(|((u, v, r), t)| (u, v, r, t))
        .collect();

    let mut by_pref: Vec<usize> = (0..n_users).collect();
    by_pref.sort_by(|&x, &y| a[x].total_cmp(&a[y]));
    let social = by_pref.windows(2).map(|w| (w[0], w[1])).collect();
    Corpus {
        interactions,
        social,
    }
}

/// Implicit clicks with social homophily.
///
/// Users and items fall into `n_clusters` clusters. Warm users click
/// `warm_clicks` items of their own cluster early on. Cold users have one
/// early click on an item of another cluster and `cold_clicks` later clicks
/// in their own cluster, so chronologically late (held-out) events belong to
/// cold users whose own training history points the wrong way. Every user is
/// linked to `friends` warm users of the same cluster.
pub struct ClusteredClicks {
    pub n_clusters: usize,
    pub warm_per_cluster: usize,
    pub cold_per_cluster: usize,
    pub items_per_cluster: usize,
    pub warm_clicks: usize,
    pub cold_clicks: usize,
    pub friends: usize,
}

impl Default for ClusteredClicks {
    fn default() -> Self {
        ClusteredClicks {
            n_clusters: 4,
            warm_per_cluster: 15,
            cold_per_cluster: 6,
            items_per_cluster: 10,
            warm_clicks: 8,
            cold_clicks: 3,
            friends: 3,
        }
    }
}

impl ClusteredClicks {
    pub fn generate(&self, seed: u64) -> Corpus {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let per_cluster = self.warm_per_cluster + self.cold_per_cluster;
        let user = |c: usize, k: usize| c * per_cluster + k;
        let items_of = |c: usize| -> Vec<usize> {
            (c * self.items_per_cluster..(c + 1) * self.items_per_cluster).collect()
        };
        let mut noise = Vec::new();
        let mut warm = Vec::new();
        let mut late = Vec::new();
        let mut social = Vec::new();
        for c in 0..self.n_clusters {
            for k in 0..per_cluster {
                let u = user(c, k);
                let mut own = items_of(c);
                own.shuffle(&mut rng);
                if k < self.warm_per_cluster {
                    warm.extend(own.iter().take(self.warm_clicks).map(|&v| (u, v)));
                } else {
                    let other = (c + rng.gen_range(1..self.n_clusters)) % self.n_clusters;
                    let v = *items_of(other).choose(&mut rng).expect("non-empty cluster");
                    noise.push((u, v));
                    late.extend(own.iter().take(self.cold_clicks).map(|&v| (u, v)));
                }
                let mut pool: Vec<usize> = (0..self.warm_per_cluster)
                    .map(|j| user(c, j))
                    .filter(|&f| f != u)
                    .collect();
                pool.shuffle(&mut rng);
                social.extend(pool.iter().take(self.friends).map(|&f| (u, f)));
            }
        }
        warm.shuffle(&mut rng);
        late.shuffle(&mut rng);
        let interactions = noise
            .into_iter()
            .chain(warm)
            .chain(late)
            .enumerate()
            .map(|(t, (u, v))| (u, v, 1, t as i64))
            .collect();
        Corpus {
            interactions,
            social,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Split;

    #[test]
    fn rank_one_corpus_survives_preprocessing() {
        let c = rank_one_ratings(20, 30, 20, 0.25, 1);
        assert_eq!(c.interactions.len(), 400);
        let d = c.dataset(RatingScale::five_star()).unwrap();
        assert_eq!(d.n_users, 20);
        assert_eq!(d.split_sizes().iter().sum::<usize>(), 400);
        assert!(d.records(Split::Test).len() >= 30);
    }

    #[test]
    fn clustered_corpus_holds_out_cold_users() {
        let g = ClusteredClicks::default();
        let d = g.generate(3).dataset(RatingScale::implicit()).unwrap();
        assert_eq!(d.n_users, 84);
        for r in d.records(Split::Test) {
            assert!(d.user_seqs[r.user].len() <= 1, "user {} is warm", r.user);
        }
    }
}
