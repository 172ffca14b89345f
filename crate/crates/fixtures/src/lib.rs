//! Deterministic synthetic scenes with planted rankings.
//!
//! Every object gets its own labels. Label embeddings are near-orthonormal,
//! so a point feature `sum_k w_k e_{perm[k]}` with strictly decreasing
//! weights ranks labels exactly in the order `perm`. Each point's `perm` is
//! built from label blocks whose order realizes the point's failure mode,
//! which makes the expected segmentation report computable in closed form
//! without running any metric code.

pub mod compare;
mod disk;
pub mod oracle;

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use olx_core::geometry::{Point3, DEFAULT_RESOLUTION};
use olx_core::pipeline::{retrieve_loaded, segment_scene, RetrievalOptions, SceneFilter, SegmentationOptions};
use olx_core::labels::CategoryLabelSet;
use olx_core::prediction::{DensePrediction, ObjectInstance, ObjectPrediction, Prediction};
use olx_core::prompt::{build_prompt_list, PromptList};
use olx_core::report::{
    ApSummary, CategoryFrequencies, RankHistogram, RetrievalReport, SceneRetrieval, SceneSegmentation,
    SegmentationReport, SetRankingScores, KIND_S, KIND_S_PLUS_D,
};
use olx_core::retrieval::{ap_thresholds, generate_queries, QueryKind, RetrievalConfig, RetrievalQuery};
use olx_core::scene::{GroundTruthScene, InstanceId};
use olx_core::seg::Category;
use olx_core::similarity::{FeatureMatrix, LabelEmbeddings};
use olx_core::{Error, Result};

pub use disk::{write_fixture, FixturePaths};

/// Fractions of points per failure mode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FailureMix {
    pub synonym: f64,
    pub depiction: f64,
    pub visually_similar: f64,
    pub clutter: f64,
    pub missing: f64,
    pub incorrect: f64,
}

impl FailureMix {
    pub const ALL_SYNONYM: FailureMix = FailureMix {
        synonym: 1.0,
        depiction: 0.0,
        visually_similar: 0.0,
        clutter: 0.0,
        missing: 0.0,
        incorrect: 0.0,
    };

    pub const EVEN: FailureMix = FailureMix {
        synonym: 1.0 / 6.0,
        depiction: 1.0 / 6.0,
        visually_similar: 1.0 / 6.0,
        clutter: 1.0 / 6.0,
        missing: 1.0 / 6.0,
        incorrect: 1.0 / 6.0,
    };

    /// In `Category::ALL` order.
    pub fn fractions(&self) -> [f64; 6] {
        [
            self.synonym,
            self.depiction,
            self.visually_similar,
            self.clutter,
            self.missing,
            self.incorrect,
        ]
    }

    /// Random mix drawn from a flat Dirichlet.
    pub fn random(rng: &mut impl Rng) -> FailureMix {
        let w: Vec<f64> = (0..6).map(|_| -rng.random::<f64>().max(1e-12).ln()).collect();
        let s: f64 = w.iter().sum();
        FailureMix {
            synonym: w[0] / s,
            depiction: w[1] / s,
            visually_similar: w[2] / s,
            clutter: w[3] / s,
            missing: w[4] / s,
            incorrect: w[5] / s,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RetrievalMode {
    /// Every object predicted exactly with a feature only its queries match.
    Perfect,
    /// Partial, merged, dropped, duplicated and spurious instances with
    /// noisy features.
    Noisy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixtureConfig {
    pub seed: u64,
    pub scenes: usize,
    pub objects: usize,
    pub points_per_object: usize,
    /// Object k gets `points_per_object + k % (size_jitter + 1)` points.
    pub size_jitter: usize,
    pub synonyms: usize,
    pub depictions: usize,
    pub visually_similar: usize,
    /// Lower bound; raised to fit all label and instance vectors.
    pub dim: usize,
    pub mix: FailureMix,
    pub retrieval: RetrievalMode,
}

impl Default for FixtureConfig {
    fn default() -> Self {
        FixtureConfig {
            seed: 0,
            scenes: 1,
            objects: 4,
            points_per_object: 24,
            size_jitter: 0,
            synonyms: 2,
            depictions: 1,
            visually_similar: 2,
            dim: 0,
            mix: FailureMix::EVEN,
            retrieval: RetrievalMode::Perfect,
        }
    }
}

impl FixtureConfig {
    fn validate(&self) -> Result<()> {
        let f = self.mix.fractions();
        if f.iter().any(|x| !(x.is_finite() && *x >= 0.0)) || (f.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::InfeasibleFixture(format!("failure mix {f:?} does not sum to 1")));
        }
        let counts = [
            ("scenes", self.scenes),
            ("objects", self.objects),
            ("points per object", self.points_per_object),
            ("synonyms", self.synonyms),
            ("depictions", self.depictions),
            ("visually similar labels", self.visually_similar),
        ];
        if let Some((name, _)) = counts.iter().find(|(_, c)| *c == 0) {
            return Err(Error::InfeasibleFixture(format!("{name} must be positive")));
        }
        if self.mix.clutter > 0.0 && self.objects < 2 {
            return Err(Error::InfeasibleFixture(
                "clutter bleed needs at least two objects to act as neighbours".into(),
            ));
        }
        Ok(())
    }
}

pub const WALL_LABEL: &str = "wall";

/// One generated scene and its predictions.
#[derive(Debug, Clone)]
pub struct FixtureScene {
    pub scene: GroundTruthScene,
    pub dense: DensePrediction,
    pub objects: ObjectPrediction,
    pub queries: Vec<RetrievalQuery>,
    pub query_embeddings: FeatureMatrix,
}

#[derive(Debug, Clone)]
pub struct Fixture {
    pub config: FixtureConfig,
    pub prompt: PromptList,
    /// Stored label embeddings (f32), one row per prompt label.
    pub label_matrix: FeatureMatrix,
    pub embeddings: LabelEmbeddings,
    pub scenes: Vec<FixtureScene>,
    /// Planted segmentation report at N = 1, 5, 10 (those not exceeding the
    /// prompt length).
    pub expected: SegmentationReport,
    /// Planted retrieval report; only for [`RetrievalMode::Perfect`].
    pub expected_retrieval: Option<RetrievalReport>,
}

impl Fixture {
    pub fn n_values(&self) -> Vec<usize> {
        self.expected.n_values.clone()
    }
}

/// Integer lattice coordinate to metres: the centre of a 0.05 m voxel, with
/// lattice neighbours 0.1 m apart so each point owns its voxel and no point
/// is within matching distance of another.
fn lattice(g: [i64; 3]) -> Point3 {
    g.map(|v| (2 * v) as f64 * 0.05 + 0.025)
}

/// Largest-remainder split of `n` by `fractions`, ties to the earlier slot.
pub fn apportion(n: usize, fractions: &[f64]) -> Vec<usize> {
    let quotas: Vec<f64> = fractions.iter().map(|f| f * n as f64).collect();
    let mut counts: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let rest = n.saturating_sub(counts.iter().sum());
    let mut order: Vec<usize> = (0..fractions.len()).collect();
    order.sort_by(|&a, &b| {
        let (ra, rb) = (quotas[a] - quotas[a].floor(), quotas[b] - quotas[b].floor());
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for &i in order.iter().take(rest) {
        counts[i] += 1;
    }
    counts
}

fn gaussian_vec(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    (0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
}

/// `count` orthonormal vectors in `dim` dimensions by modified Gram-Schmidt.
fn orthonormal(rng: &mut ChaCha8Rng, count: usize, dim: usize) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = Vec::with_capacity(count);
    while out.len() < count {
        let mut v = gaussian_vec(rng, dim);
        for b in &out {
            let d: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
            v.iter_mut().zip(b).for_each(|(x, y)| *x -= d * y);
        }
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-6 {
            v.iter_mut().for_each(|x| *x /= n);
            out.push(v);
        }
    }
    out
}

const LABEL_PERTURBATION: f64 = 1e-6;

fn clutter_neighbours(k: usize, n: usize) -> BTreeSet<usize> {
    let mut out = BTreeSet::new();
    if n < 2 {
        return out;
    }
    let partner = k ^ 1;
    if partner < n {
        out.insert(partner);
    } else {
        out.insert(k - 1);
    }
    if n % 2 == 1 && k == n - 2 {
        out.insert(n - 1);
    }
    out
}

/// Label blocks of one object, as prompt indices.
struct Blocks {
    syn: Vec<u32>,
    dep: Vec<u32>,
    vis: Vec<u32>,
    clutter: Vec<u32>,
    other: Vec<u32>,
}

impl Blocks {
    /// Block order realizing `mode`; `None` for missing points.
    fn order(&self, mode: Category) -> Option<[&Vec<u32>; 5]> {
        let (s, d, v, c, o) = (&self.syn, &self.dep, &self.vis, &self.clutter, &self.other);
        Some(match mode {
            Category::Synonym => [s, d, v, c, o],
            Category::Depiction => [d, s, v, c, o],
            Category::VisuallySimilar => [v, s, d, c, o],
            Category::Clutter => [c, s, d, v, o],
            Category::Incorrect => [o, s, d, v, c],
            Category::Missing => return None,
        })
    }
}

/// Closed-form set terms for a point whose blocks are laid out as `order`.
struct PlantedTerms {
    syn_inlier: f64,
    syn_right: f64,
    dvs_inlier: f64,
    dvs_left: f64,
    dvs_right: f64,
    mean_score: f64,
}

fn planted_terms(b: &Blocks, mode: Category, len: usize) -> PlantedTerms {
    let order = b.order(mode).expect("matched mode");
    // first rank of each block
    let mut start = BTreeMap::new();
    let mut r = 1usize;
    for blk in order {
        start.insert(blk.as_ptr() as usize, r);
        r += blk.len();
    }
    let range = |blk: &Vec<u32>| {
        let s = start[&(blk.as_ptr() as usize)];
        s..s + blk.len()
    };
    let (ns, ndvs) = (b.syn.len(), b.dep.len() + b.vis.len());
    let lf = len as f64;
    let left = |r: usize, bl: usize| 1.0 + ((r as f64 - bl as f64) / bl as f64).min(0.0);
    let right = |r: usize, br: usize| {
        if br == len {
            1.0
        } else {
            1.0 - ((r as f64 - br as f64) / (lf - br as f64)).max(0.0)
        }
    };
    let (sl, sr) = (1, ns);
    let (dl, dr) = (ns + 1, ns + ndvs);
    let syn: Vec<usize> = range(&b.syn).collect();
    let dvs: Vec<usize> = range(&b.dep).chain(range(&b.vis)).collect();
    let inside = |r: usize, l: usize, h: usize| (l <= r && r <= h) as u32 as f64;
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let syn_scores: Vec<f64> = syn.iter().map(|&r| left(r, sl).min(right(r, sr))).collect();
    let dvs_scores: Vec<f64> = dvs.iter().map(|&r| left(r, dl).min(right(r, dr))).collect();
    PlantedTerms {
        syn_inlier: mean(&syn.iter().map(|&r| inside(r, sl, sr)).collect::<Vec<_>>()),
        syn_right: mean(&syn.iter().map(|&r| right(r, sr)).collect::<Vec<_>>()),
        dvs_inlier: mean(&dvs.iter().map(|&r| inside(r, dl, dr)).collect::<Vec<_>>()),
        dvs_left: mean(&dvs.iter().map(|&r| left(r, dl)).collect::<Vec<_>>()),
        dvs_right: mean(&dvs.iter().map(|&r| right(r, dr)).collect::<Vec<_>>()),
        mean_score: (syn_scores.iter().sum::<f64>() + dvs_scores.iter().sum::<f64>()) / (ns + ndvs) as f64,
    }
}

fn planted_category(b: &Blocks, mode: Category, n: usize) -> Category {
    let first = match mode {
        Category::Missing => return Category::Missing,
        Category::Synonym => b.syn.len(),
        Category::Depiction => b.dep.len(),
        Category::VisuallySimilar => b.vis.len(),
        Category::Clutter => b.clutter.len(),
        Category::Incorrect => b.other.len(),
    };
    if n <= first {
        mode
    } else {
        Category::Synonym
    }
}

struct ObjectPlan {
    id: InstanceId,
    grid: Vec<[i64; 3]>,
    modes: Vec<Category>,
    blocks: Blocks,
}

/// Generates a fixture. A pure function of the config.
pub fn generate_fixture(config: &FixtureConfig) -> Result<Fixture> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let n_obj = config.objects;
    let max_pts = config.points_per_object + config.size_jitter;
    let side = (1..).find(|s: &i64| (s * s * s) as usize >= max_pts).expect("finite");
    let pitch = side + 5;
    let obj_id = |k: usize| InstanceId(k as u32 + 1);
    let wall_id = InstanceId(0);

    // labels and scenes without geometry yet
    let mut label_sets: Vec<BTreeMap<InstanceId, CategoryLabelSet>> = Vec::new();
    for s in 0..config.scenes {
        let mut labels = BTreeMap::new();
        for k in 0..n_obj {
            let names = |kind: &str, n: usize| (0..n).map(|j| format!("s{s} o{k} {kind}{j}")).collect();
            labels.insert(
                obj_id(k),
                CategoryLabelSet {
                    synonyms: names("syn", config.synonyms),
                    depictions: names("dep", config.depictions),
                    visually_similar: names("vis", config.visually_similar),
                    clutter_ids: clutter_neighbours(k, n_obj).into_iter().map(obj_id).collect(),
                    ambiguous: false,
                },
            );
        }
        labels.insert(
            wall_id,
            CategoryLabelSet {
                synonyms: [WALL_LABEL.to_string()].into(),
                ..Default::default()
            },
        );
        label_sets.push(labels);
    }
    let label_only: Vec<GroundTruthScene> = label_sets
        .iter()
        .map(|l| GroundTruthScene::new("tmp", vec![], vec![], l.clone(), BTreeSet::new()))
        .collect::<Result<_>>()?;
    let prompt = build_prompt_list(&label_only)?;
    let len = prompt.len();
    let instance_vectors = n_obj + 1 + n_obj; // objects, wall, spurious
    let dim = config.dim.max(len).max(instance_vectors);

    let basis = orthonormal(&mut rng, len, dim);
    let label_rows: Vec<Vec<f32>> = basis
        .iter()
        .map(|e| {
            let g = gaussian_vec(&mut rng, dim);
            e.iter().zip(&g).map(|(x, y)| (x + LABEL_PERTURBATION * y) as f32).collect()
        })
        .collect();
    let label_matrix = FeatureMatrix::from_rows(dim, &label_rows)?;
    let embeddings = LabelEmbeddings::new(&label_matrix)?;
    let feature_for = |perm: &[u32]| -> Vec<f32> {
        let mut f = vec![0.0f64; dim];
        for (k, &l) in perm.iter().enumerate() {
            let w = (len - k) as f64 / len as f64;
            f.iter_mut().zip(&basis[l as usize]).for_each(|(a, b)| *a += w * b);
        }
        f.into_iter().map(|x| x as f32).collect()
    };

    let n_values: Vec<usize> = [1usize, 5, 10].into_iter().filter(|&n| n <= len).collect();
    let fractions = config.mix.fractions();
    let mut scenes = Vec::new();
    let mut expected_scenes = BTreeMap::new();
    let mut expected_retrieval = BTreeMap::new();

    for (s, labels) in label_sets.into_iter().enumerate() {
        let name = format!("scene{s:03}");
        let pos = |l: &String| prompt.position(l).expect("label in prompt");
        let mut plans = Vec::new();
        for k in 0..n_obj {
            let id = obj_id(k);
            let set = &labels[&id];
            let syn: Vec<u32> = set.synonyms.iter().map(pos).collect();
            let dep: Vec<u32> = set.depictions.iter().map(pos).collect();
            let vis: Vec<u32> = set.visually_similar.iter().map(pos).collect();
            let own: BTreeSet<u32> = syn.iter().chain(&dep).chain(&vis).copied().collect();
            let clutter: BTreeSet<u32> = set
                .clutter_ids
                .iter()
                .flat_map(|c| labels[c].all_labels().map(pos))
                .filter(|l| !own.contains(l))
                .collect();
            let other: Vec<u32> = (0..len as u32).filter(|l| !own.contains(l) && !clutter.contains(l)).collect();
            let n_pts = config.points_per_object + k % (config.size_jitter + 1);
            let counts = apportion(n_pts, &fractions);
            let mut modes: Vec<Category> = Category::ALL
                .iter()
                .zip(&counts)
                .flat_map(|(c, &n)| std::iter::repeat_n(*c, n))
                .collect();
            modes.shuffle(&mut rng);
            let base = k as i64 * pitch;
            let grid = (0..n_pts as i64)
                .map(|j| [base + j % side, (j / side) % side, j / (side * side)])
                .collect();
            plans.push(ObjectPlan {
                id,
                grid,
                modes,
                blocks: Blocks {
                    syn,
                    dep,
                    vis,
                    clutter: clutter.into_iter().collect(),
                    other,
                },
            });
        }

        // ground truth
        let mut points = Vec::new();
        let mut ids = Vec::new();
        for p in &plans {
            points.extend(p.grid.iter().map(|&g| lattice(g)));
            ids.extend(std::iter::repeat_n(p.id, p.grid.len()));
        }
        let wall_base = n_obj as i64 * pitch;
        let wall_grid: Vec<[i64; 3]> = (0..8).map(|j| [wall_base + j, 0, 0]).collect();
        points.extend(wall_grid.iter().map(|&g| lattice(g)));
        ids.extend(std::iter::repeat_n(wall_id, wall_grid.len()));
        let scene = GroundTruthScene::new(name.clone(), points, ids, labels.clone(), BTreeSet::from([wall_id]))?;

        // dense prediction: planted rankings for matched points, a few
        // far-away distractor points, then a shuffle of the cloud order
        let mut dense: Vec<(Point3, Vec<f32>)> = Vec::new();
        for p in &plans {
            for (g, &mode) in p.grid.iter().zip(&p.modes) {
                let Some(order) = p.blocks.order(mode) else { continue };
                let mut perm = Vec::with_capacity(len);
                for blk in order {
                    let mut b = blk.clone();
                    b.shuffle(&mut rng);
                    perm.extend(b);
                }
                dense.push((lattice(*g), feature_for(&perm)));
            }
        }
        let mut random_perm: Vec<u32> = (0..len as u32).collect();
        for g in &wall_grid {
            random_perm.shuffle(&mut rng);
            dense.push((lattice(*g), feature_for(&random_perm)));
        }
        let far = (n_obj as i64 + 2) * pitch;
        for j in 0..4 {
            random_perm.shuffle(&mut rng);
            dense.push((lattice([far + j, 0, 0]), feature_for(&random_perm)));
        }
        dense.shuffle(&mut rng);
        let (dpoints, drows): (Vec<Point3>, Vec<Vec<f32>>) = dense.into_iter().unzip();
        let dense = DensePrediction::new(dpoints, FeatureMatrix::from_rows(dim, &drows)?)?;

        // planted segmentation expectation
        let mut freq: Vec<CategoryFrequencies> = vec![CategoryFrequencies::default(); n_values.len()];
        let (mut mr, mut rs, mut rd, mut psu, mut pdo, mut pdu) = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
        let mut matched = 0usize;
        let mut total = 0usize;
        for p in &plans {
            let n_o = p.modes.len() as f64;
            for (fi, &n) in n_values.iter().enumerate() {
                for c in Category::ALL {
                    let count = p.modes.iter().filter(|&&m| planted_category(&p.blocks, m, n) == c).count();
                    *freq[fi].get_mut(c) += count as f64 / n_o;
                }
            }
            total += p.modes.len();
            for &m in &p.modes {
                if m == Category::Missing {
                    continue;
                }
                let t = planted_terms(&p.blocks, m, len);
                matched += 1;
                mr += t.mean_score;
                rs += t.syn_inlier;
                rd += t.dvs_inlier;
                psu += 1.0 - t.syn_right;
                pdo += 1.0 - t.dvs_left;
                pdu += 1.0 - t.dvs_right;
            }
        }
        for f in freq.iter_mut() {
            for c in Category::ALL {
                *f.get_mut(c) /= n_obj as f64;
            }
        }
        let avg = |x: f64| (matched > 0).then(|| x / matched as f64);
        expected_scenes.insert(
            name.clone(),
            SceneSegmentation {
                objects: n_obj,
                points: total,
                matched_points: matched,
                frequencies: n_values.iter().copied().zip(freq).collect(),
                set_ranking: SetRankingScores {
                    mean_ranking: avg(mr),
                    inlier_synonym: avg(rs),
                    inlier_dvs: avg(rd),
                    penalty_synonym_under: avg(psu),
                    penalty_dvs_over: avg(pdo),
                    penalty_dvs_under: avg(pdu),
                    points: matched,
                    points_synonym: matched,
                    points_dvs: matched,
                },
                miou: None,
            },
        );

        // retrieval
        let u = orthonormal(&mut rng, instance_vectors, dim);
        let queries = generate_queries(&scene);
        let to_f32 = |v: &[f64]| v.iter().map(|&x| x as f32).collect::<Vec<f32>>();
        let qrows: Vec<Vec<f32>> = queries
            .iter()
            .map(|q| {
                let mut e = vec![0.0; dim];
                for t in &q.targets {
                    let k = t.0 as usize - 1;
                    e.iter_mut().zip(&u[k]).for_each(|(a, b)| *a += b);
                }
                if config.retrieval == RetrievalMode::Noisy {
                    let g = gaussian_vec(&mut rng, dim);
                    let gn = g.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
                    e.iter_mut().zip(&g).for_each(|(a, b)| *a += 0.4 * b / gn);
                }
                to_f32(&e)
            })
            .collect();
        let query_embeddings = FeatureMatrix::from_rows(dim, &qrows)?;

        let mut inst_points: Vec<Point3> = Vec::new();
        let mut instances: Vec<ObjectInstance> = Vec::new();
        let mut inst_rows: Vec<Vec<f32>> = Vec::new();
        let mut push = |pts: Vec<Point3>, feature: Vec<f32>, confidence: f64, instances: &mut Vec<ObjectInstance>| {
            let start = inst_points.len() as u32;
            inst_points.extend(pts);
            instances.push(ObjectInstance {
                id: InstanceId(instances.len() as u32),
                confidence: Some(confidence),
                indices: (start..inst_points.len() as u32).collect(),
            });
            inst_rows.push(feature);
        };
        let grid_points = |p: &ObjectPlan| p.grid.iter().map(|&g| lattice(g)).collect::<Vec<_>>();
        match config.retrieval {
            RetrievalMode::Perfect => {
                for (k, p) in plans.iter().enumerate() {
                    push(grid_points(p), to_f32(&u[k]), 0.9, &mut instances);
                }
                push(wall_grid.iter().map(|&g| lattice(g)).collect(), to_f32(&u[n_obj]), 0.9, &mut instances);
            }
            RetrievalMode::Noisy => {
                let noisy = |rng: &mut ChaCha8Rng, base: &[f64], scale: f64| {
                    let g = gaussian_vec(rng, dim);
                    let gn = g.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
                    base.iter().zip(&g).map(|(b, x)| (b + scale * x / gn) as f32).collect::<Vec<f32>>()
                };
                for (k, p) in plans.iter().enumerate() {
                    let pts = grid_points(p);
                    let conf = rng.random_range(0.05..1.0);
                    let scale = rng.random_range(0.0..1.2);
                    let feat = noisy(&mut rng, &u[k], scale);
                    match rng.random_range(0..5u32) {
                        0 => push(pts, feat, conf, &mut instances),
                        1 => {
                            let keep = (pts.len() as f64 * rng.random_range(0.2..1.0)).ceil() as usize;
                            push(pts[..keep.max(1)].to_vec(), feat, conf, &mut instances);
                        }
                        2 => {
                            let mut merged = pts;
                            let j = *clutter_neighbours(k, n_obj).iter().next().unwrap_or(&k);
                            if j != k {
                                merged.extend(grid_points(&plans[j]));
                            }
                            push(merged, feat, conf, &mut instances);
                        }
                        3 => {
                            // duplicate pair for NMS to resolve
                            push(pts.clone(), feat.clone(), conf, &mut instances);
                            let keep = (pts.len() * 3).div_ceil(4);
                            push(pts[..keep].to_vec(), noisy(&mut rng, &u[k], 0.3), conf * 0.9, &mut instances);
                        }
                        _ => {}
                    }
                }
                for j in 0..rng.random_range(1..=n_obj) {
                    let target = rng.random_range(0..n_obj);
                    let base = far + 10 + 20 * j as i64;
                    let pts = (0..6).map(|i| lattice([base + i, 0, 0])).collect();
                    let scale = rng.random_range(0.2..1.5);
                    let feat = noisy(&mut rng, &u[target], scale);
                    let conf = rng.random_range(0.05..1.0);
                    push(pts, feat, conf, &mut instances);
                }
            }
        }
        let objects = ObjectPrediction::new(inst_points, FeatureMatrix::from_rows(dim, &inst_rows)?, instances)?;

        if config.retrieval == RetrievalMode::Perfect {
            let ones: BTreeMap<u32, f64> = ap_thresholds().into_iter().map(|t| (t, 1.0)).collect();
            let count = |k: QueryKind| queries.iter().filter(|q| q.kind == k).count();
            let summary = |n: usize| (n > 0).then(|| ApSummary::from_thresholds(ones.clone(), n));
            let mut hist = RankHistogram::default();
            hist.ranks[0] = queries.len();
            expected_retrieval.insert(
                name.clone(),
                SceneRetrieval {
                    queries: queries.len(),
                    instances: objects.instances().len(),
                    overall: summary(queries.len()),
                    by_kind: BTreeMap::from([
                        (KIND_S.to_string(), summary(count(QueryKind::Synonym))),
                        (KIND_S_PLUS_D.to_string(), summary(count(QueryKind::SynonymDepiction))),
                    ]),
                    rank_histogram: hist,
                },
            );
        }

        scenes.push(FixtureScene {
            scene,
            dense,
            objects,
            queries,
            query_embeddings,
        });
    }

    Ok(Fixture {
        config: config.clone(),
        prompt,
        label_matrix,
        embeddings,
        scenes,
        expected: SegmentationReport::from_scenes(n_values, expected_scenes),
        expected_retrieval: (config.retrieval == RetrievalMode::Perfect)
            .then(|| RetrievalReport::from_scenes(false, expected_retrieval)),
    })
}

/// Closed class list for mIoU: the primary class of every labeled object.
pub fn class_list(fixture: &Fixture) -> Result<PromptList> {
    let classes: BTreeSet<String> = fixture
        .scenes
        .iter()
        .flat_map(|s| s.scene.labels().values().filter_map(|l| l.primary_class().cloned()))
        .collect();
    PromptList::new(classes.into_iter().collect())
}

/// Both tracks' reports for a fixture.
#[derive(Debug, Clone, PartialEq)]
pub struct Reports {
    pub segmentation: SegmentationReport,
    pub retrieval: RetrievalReport,
}

/// Reports from the engine, with mIoU over [`class_list`] and the default
/// scene filter.
pub fn engine_reports(fixture: &Fixture, pooled: bool) -> Result<Reports> {
    let n_values = fixture.n_values();
    let seg_options = SegmentationOptions {
        n_values: n_values.clone(),
        class_list: Some(class_list(fixture)?),
        ..Default::default()
    };
    let ret_options = RetrievalOptions {
        retrieval: RetrievalConfig {
            pooled,
            ..Default::default()
        },
        ..Default::default()
    };
    let mut seg = BTreeMap::new();
    let mut ret = BTreeMap::new();
    for s in &fixture.scenes {
        let name = s.scene.name().to_string();
        let dense = Prediction::Dense(s.dense.clone());
        let out = segment_scene(s.scene.clone(), &dense, &fixture.prompt, &fixture.embeddings, &seg_options)?;
        seg.insert(name.clone(), out.evaluation.summary);
        let objects = Prediction::Object(s.objects.clone());
        ret.insert(
            name,
            retrieve_loaded(s.scene.clone(), &s.queries, &s.query_embeddings, &objects, &ret_options)?,
        );
    }
    Ok(Reports {
        segmentation: SegmentationReport::from_scenes(n_values, seg),
        retrieval: RetrievalReport::from_scenes(pooled, ret),
    })
}

/// Reports from the naive oracle under the same settings as
/// [`engine_reports`].
pub fn oracle_reports(fixture: &Fixture, pooled: bool) -> Result<Reports> {
    let n_values = fixture.n_values();
    let classes = class_list(fixture)?;
    let filter = SceneFilter::default();
    let mut seg = BTreeMap::new();
    let mut ret = BTreeMap::new();
    for s in &fixture.scenes {
        let name = s.scene.name().to_string();
        let scene = filter.apply(s.scene.clone());
        let dense = Prediction::Dense(s.dense.clone());
        seg.insert(
            name.clone(),
            oracle::segmentation(
                &scene,
                &fixture.prompt,
                &fixture.label_matrix,
                &dense,
                &n_values,
                Some(&classes),
                DEFAULT_RESOLUTION,
            )?,
        );
        let instances = s.objects.retrieval_instances();
        ret.insert(
            name,
            oracle::retrieval(&scene, &s.queries, &s.query_embeddings, &instances, DEFAULT_RESOLUTION, pooled)?,
        );
    }
    Ok(Reports {
        segmentation: SegmentationReport::from_scenes(n_values, seg),
        retrieval: RetrievalReport::from_scenes(pooled, ret),
    })
}

/// A small random configuration for agreement testing: at most 8 objects of
/// at most 43 points per scene and at most 50 labels.
pub fn random_config(seed: u64) -> FixtureConfig {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_f1c5);
    let scenes = rng.random_range(1..=2);
    let objects = rng.random_range(2..=8);
    let per_object_labels = 49 / (objects * scenes); // plus the shared wall label
    let synonyms = rng.random_range(1..=3.min(per_object_labels - 2));
    let depictions = rng.random_range(1..=2.min(per_object_labels - synonyms - 1));
    let visually_similar = rng.random_range(1..=3.min(per_object_labels - synonyms - depictions));
    FixtureConfig {
        seed,
        scenes,
        objects,
        points_per_object: rng.random_range(5..=40),
        size_jitter: rng.random_range(0..=3),
        synonyms,
        depictions,
        visually_similar,
        dim: 0,
        mix: FailureMix::random(&mut rng),
        retrieval: if rng.random_bool(0.5) {
            RetrievalMode::Perfect
        } else {
            RetrievalMode::Noisy
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn apportion_sums() {
        assert_eq!(apportion(10, &[0.5, 0.5]), vec![5, 5]);
        assert_eq!(apportion(7, &FailureMix::EVEN.fractions()), vec![2, 1, 1, 1, 1, 1]);
        assert_eq!(apportion(3, &[0.0, 1.0]), vec![0, 3]);
    }

    #[test]
    fn clutter_pairs_are_symmetric() {
        for n in 2..9 {
            for k in 0..n {
                for j in clutter_neighbours(k, n) {
                    assert!(clutter_neighbours(j, n).contains(&k), "n={n} k={k} j={j}");
                    assert_ne!(j, k);
                }
            }
        }
    }

    #[test]
    fn all_synonym_plants_one() {
        let f = generate_fixture(&FixtureConfig {
            mix: FailureMix::ALL_SYNONYM,
            ..Default::default()
        })
        .unwrap();
        let d = &f.expected.dataset;
        assert_eq!(d.frequencies[&1].synonym, 1.0);
        assert_eq!(d.set_ranking.mean_ranking, Some(1.0));
        assert_eq!(d.set_ranking.penalty_synonym_under, Some(0.0));
    }

    #[test]
    fn half_missing() {
        let f = generate_fixture(&FixtureConfig {
            mix: FailureMix {
                synonym: 0.5,
                missing: 0.5,
                ..FailureMix::ALL_SYNONYM
            },
            points_per_object: 10,
            ..Default::default()
        })
        .unwrap();
        let fr = f.expected.dataset.frequencies[&1];
        assert_eq!((fr.synonym, fr.missing), (0.5, 0.5));
    }

    #[test]
    fn infeasible_mixes() {
        let cfg = FixtureConfig {
            objects: 1,
            mix: FailureMix::EVEN,
            ..Default::default()
        };
        assert!(matches!(generate_fixture(&cfg), Err(Error::InfeasibleFixture(_))));
        let cfg = FixtureConfig {
            mix: FailureMix {
                synonym: 0.7,
                ..FailureMix::ALL_SYNONYM
            },
            ..Default::default()
        };
        assert!(generate_fixture(&cfg).is_err());
    }

    #[test]
    fn deterministic() {
        let cfg = FixtureConfig {
            seed: 9,
            retrieval: RetrievalMode::Noisy,
            ..Default::default()
        };
        let (a, b) = (generate_fixture(&cfg).unwrap(), generate_fixture(&cfg).unwrap());
        assert_eq!(a.label_matrix, b.label_matrix);
        assert_eq!(a.scenes[0].dense, b.scenes[0].dense);
        assert_eq!(a.scenes[0].objects, b.scenes[0].objects);
        assert_eq!(a.expected, b.expected);
    }
}
