//! Single-step equivalence of the practical update against exhaustive
//! enumeration over all measurement partitions and associations, plus the
//! structural properties of the update.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use pmbm::assoc::Gating;
use pmbm::brute::{exhaustive_update, point_only_update, MicroScene, OracleGlobal, PointScene};
use pmbm::filter::{
    update, ClutterModel, PartitionConfig, PruneConfig, Region, SensorModels, UpdateConfig,
};
use pmbm::hybrid::{
    GGIWParams, GaussianDensity, GlobalHypothesis, HybridSingleTargetDensity, LocalHypothesis,
    PMBMDensity, PPPIntensity, Track, WeightedGaussian, WeightedGgiw,
};
use pmbm::models::{ExtendedMeasModel, PointMeasModel};

const REL_TOL: f64 = 1e-10;

fn rel_close(a: f64, b: f64) -> bool {
    (a - b).abs() <= REL_TOL * a.abs().max(b.abs()).max(1e-300)
}

fn obs_matrix() -> DMatrix<f64> {
    DMatrix::from_row_slice(2, 4, &[1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0])
}

fn exact_config() -> UpdateConfig {
    UpdateConfig {
        gating: Gating::None,
        partitions: PartitionConfig::All,
        prune: PruneConfig {
            max_globals: 1_000_000,
            ppp_weight_min: 0.0,
            bernoulli_exist_min: 0.0,
            global_weight_min: 0.0,
        },
    }
}

fn random_gaussian(rng: &mut ChaCha12Rng) -> GaussianDensity {
    let mean = DVector::from_fn(4, |_, _| rng.gen_range(-8.0..8.0));
    let a = DMatrix::from_fn(4, 4, |_, _| rng.gen_range(-0.6..0.6));
    let cov = &a * a.transpose() + DMatrix::identity(4, 4) * rng.gen_range(0.5..4.0);
    GaussianDensity::new(mean, cov)
}

fn random_ggiw(rng: &mut ChaCha12Rng) -> GGIWParams {
    let g = random_gaussian(rng);
    let b = DMatrix::from_fn(2, 2, |_, _| rng.gen_range(-1.0..1.0));
    let scale = &b * b.transpose() + DMatrix::identity(2, 2) * rng.gen_range(4.0..30.0);
    GGIWParams {
        alpha: rng.gen_range(5.0..60.0),
        beta: rng.gen_range(1.0..8.0),
        mean: g.mean,
        cov: g.cov,
        dof: rng.gen_range(10.0..30.0),
        scale,
    }
}

fn random_scene(rng: &mut ChaCha12Rng) -> MicroScene {
    let models = SensorModels {
        point: PointMeasModel {
            obs_matrix: obs_matrix(),
            noise_cov: DMatrix::identity(2, 2) * rng.gen_range(0.5..2.0),
            detection: rng.gen_range(0.3..0.99),
        },
        extended: ExtendedMeasModel {
            obs_matrix: obs_matrix(),
            detection: rng.gen_range(0.3..0.99),
        },
    };

    let mut ppp = PPPIntensity::default();
    for _ in 0..rng.gen_range(1..=2) {
        ppp.point_components.push(WeightedGaussian {
            weight: rng.gen_range(0.01..0.5),
            gaussian: random_gaussian(rng),
        });
    }
    for _ in 0..rng.gen_range(1..=2) {
        ppp.extended_components.push(WeightedGgiw {
            weight: rng.gen_range(0.01..0.5),
            ggiw: random_ggiw(rng),
        });
    }

    let prior = if rng.gen_bool(0.85) {
        let c = match rng.gen_range(0..4) {
            0 => 0.0,
            1 => 1.0,
            _ => rng.gen_range(0.05..0.95),
        };
        let density = HybridSingleTargetDensity {
            point_prob: c,
            point: if c > 0.0 {
                Some(random_gaussian(rng))
            } else {
                None
            },
            extended: if c < 1.0 { Some(random_ggiw(rng)) } else { None },
        };
        Some((rng.gen_range(0.05..1.0), density))
    } else {
        None
    };

    let m = rng.gen_range(0..=3);
    let measurements = (0..m)
        .map(|_| DVector::from_fn(2, |_, _| rng.gen_range(-10.0..10.0)))
        .collect();

    MicroScene {
        ppp,
        prior,
        measurements,
        models,
        clutter: ClutterModel {
            rate: rng.gen_range(1.0..10.0),
            region: Region {
                x_min: -20.0,
                x_max: 20.0,
                y_min: -20.0,
                y_max: 20.0,
            },
        },
        step: 1,
    }
}

fn scene_to_density(scene: &MicroScene) -> PMBMDensity {
    let mut pred = PMBMDensity::empty();
    pred.step = scene.step;
    pred.ppp = scene.ppp.clone();
    if let Some((existence, density)) = &scene.prior {
        pred.tracks.push(Track {
            id: 0,
            hypotheses: vec![LocalHypothesis {
                log_weight: 0.0,
                existence: *existence,
                density: Some(density.clone()),
                assoc_history: Vec::new(),
            }],
        });
        pred.next_track_id = 1;
        pred.globals = vec![GlobalHypothesis {
            weight: 1.0,
            choice: vec![0],
        }];
    }
    pred
}

/// Canonical form of one posterior global: sorted Bernoulli signatures
/// (prior track index or None, current measurements) with existence and
/// point probability.
type BernKey = (Option<usize>, Vec<usize>);
type GlobalKey = Vec<BernKey>;
type GlobalSummary = (f64, BTreeMap<BernKey, (f64, f64)>);

fn summarize_posterior(post: &PMBMDensity, prior_track_ids: u64) -> Vec<GlobalSummary> {
    let mut out = Vec::new();
    for g in &post.globals {
        if g.weight <= 0.0 {
            continue;
        }
        let mut map = BTreeMap::new();
        for (track, &a) in post.tracks.iter().zip(&g.choice) {
            let hyp = &track.hypotheses[a];
            let current: Vec<usize> = hyp.assoc_at(post.step).collect();
            if hyp.existence == 0.0 && current.is_empty() {
                continue; // non-existence hypothesis of an unused new track
            }
            let prior_index = (track.id < prior_track_ids).then_some(track.id as usize);
            let point_prob = hyp.density.as_ref().map_or(0.0, |d| d.point_prob);
            map.insert((prior_index, current), (hyp.existence, point_prob));
        }
        out.push((g.weight, map));
    }
    out
}

fn summarize_oracle(globals: &[OracleGlobal]) -> Vec<GlobalSummary> {
    globals
        .iter()
        .filter(|g| g.weight > 0.0)
        .map(|g| {
            let mut map = BTreeMap::new();
            for b in &g.bernoullis {
                map.insert(
                    (b.prior_index, b.current.clone()),
                    (b.existence, b.point_prob),
                );
            }
            (g.weight, map)
        })
        .collect()
}

fn compare_posteriors(got: &[GlobalSummary], want: &[GlobalSummary], label: &str) {
    assert_eq!(
        got.len(),
        want.len(),
        "{label}: global count {} vs oracle {}",
        got.len(),
        want.len()
    );
    let key_of = |s: &GlobalSummary| -> GlobalKey { s.1.keys().cloned().collect() };
    let mut got_map: BTreeMap<GlobalKey, &GlobalSummary> = BTreeMap::new();
    for s in got {
        assert!(
            got_map.insert(key_of(s), s).is_none(),
            "{label}: duplicate global key in update output"
        );
    }
    for w in want {
        let key = key_of(w);
        let g = got_map
            .get(&key)
            .unwrap_or_else(|| panic!("{label}: oracle global {key:?} missing from update"));
        assert!(
            rel_close(g.0, w.0),
            "{label}: weight {} vs oracle {} for {key:?}",
            g.0,
            w.0
        );
        for (bkey, (r_want, c_want)) in &w.1 {
            let (r_got, c_got) = g.1[bkey];
            assert!(
                rel_close(r_got, *r_want),
                "{label}: existence {r_got} vs oracle {r_want} for {bkey:?}"
            );
            // class probability is only meaningful for existing Bernoullis
            if *r_want > 1e-12 {
                assert!(
                    rel_close(c_got, *c_want),
                    "{label}: point_prob {c_got} vs oracle {c_want} for {bkey:?}"
                );
            }
        }
    }
}

#[test]
fn update_matches_exhaustive_enumeration_on_micro_scenes() {
    let mut rng = ChaCha12Rng::seed_from_u64(2024);
    let cfg = exact_config();
    for scene_idx in 0..250 {
        let scene = random_scene(&mut rng);
        let pred = scene_to_density(&scene);
        let post = update(
            &pred,
            &scene.measurements,
            &scene.models,
            &scene.clutter,
            &cfg,
        )
        .unwrap();
        post.validate()
            .unwrap_or_else(|e| panic!("scene {scene_idx}: invalid posterior: {e}"));

        let oracle = exhaustive_update(&scene).unwrap();
        let got = summarize_posterior(&post, pred.next_track_id);
        let want = summarize_oracle(&oracle);
        compare_posteriors(&got, &want, &format!("scene {scene_idx}"));
    }
}

#[test]
fn update_two_measurement_example_matches_brute_force() {
    let mut rng = ChaCha12Rng::seed_from_u64(7);
    let mut scene = random_scene(&mut rng);
    // pin the documented shape: one prior Bernoulli, two measurements
    while scene.prior.is_none() {
        scene = random_scene(&mut rng);
    }
    scene.measurements = vec![
        DVector::from_vec(vec![1.0, 0.5]),
        DVector::from_vec(vec![-2.0, 1.5]),
    ];
    let pred = scene_to_density(&scene);
    let post = update(
        &pred,
        &scene.measurements,
        &scene.models,
        &scene.clutter,
        &exact_config(),
    )
    .unwrap();
    let oracle = exhaustive_update(&scene).unwrap();
    compare_posteriors(
        &summarize_posterior(&post, pred.next_track_id),
        &summarize_oracle(&oracle),
        "two-measurement example",
    );
}

#[test]
fn pure_clutter_scene_concentrates_on_all_clutter_global() {
    // empty PPP: every new Bernoulli is pure clutter, multi-measurement
    // subsets are infeasible, and a single all-clutter global remains
    let mut rng = ChaCha12Rng::seed_from_u64(99);
    let mut scene = random_scene(&mut rng);
    scene.ppp = PPPIntensity::default();
    scene.prior = None;
    scene.measurements = vec![
        DVector::from_vec(vec![1.0, 0.5]),
        DVector::from_vec(vec![-2.0, 1.5]),
    ];
    let pred = scene_to_density(&scene);
    let post = update(
        &pred,
        &scene.measurements,
        &scene.models,
        &scene.clutter,
        &exact_config(),
    )
    .unwrap();
    assert_eq!(post.globals.len(), 1);
    assert!((post.globals[0].weight - 1.0).abs() < 1e-12);
    // pure-clutter Bernoullis carry zero existence everywhere
    for (track, &a) in post.tracks.iter().zip(&post.globals[0].choice) {
        assert_eq!(track.hypotheses[a].existence, 0.0);
    }
}

#[test]
fn structural_counts_match_theorem() {
    // before pruning, with all partitions enabled: one new track per unique
    // subset (2^m - 1) and a misdetection continuation for every prior
    // local hypothesis
    let mut rng = ChaCha12Rng::seed_from_u64(5);
    for _ in 0..20 {
        let mut scene = random_scene(&mut rng);
        while scene.prior.is_none() || scene.measurements.len() < 2 {
            scene = random_scene(&mut rng);
        }
        let m = scene.measurements.len();
        let pred = scene_to_density(&scene);
        let post = update(
            &pred,
            &scene.measurements,
            &scene.models,
            &scene.clutter,
            &exact_config(),
        )
        .unwrap();

        let new_tracks = post
            .tracks
            .iter()
            .filter(|t| t.id >= pred.next_track_id)
            .count();
        assert_eq!(new_tracks, (1 << m) - 1, "one new track per subset");

        // the prior track keeps a misdetection hypothesis: same history,
        // no current-step measurements
        let prior_track = post
            .tracks
            .iter()
            .find(|t| t.id < pred.next_track_id)
            .expect("prior track survives");
        assert!(
            prior_track
                .hypotheses
                .iter()
                .any(|h| h.assoc_at(post.step).next().is_none()),
            "misdetection hypothesis exists"
        );
    }
}

#[test]
fn point_only_scenes_match_classical_point_update() {
    let mut rng = ChaCha12Rng::seed_from_u64(31);
    for scene_idx in 0..60 {
        let detection = rng.gen_range(0.3..0.99);
        let meas_model = PointMeasModel {
            obs_matrix: obs_matrix(),
            noise_cov: DMatrix::identity(2, 2) * rng.gen_range(0.5..2.0),
            detection,
        };
        let n_bern = rng.gen_range(1..=2);
        let bernoullis: Vec<(f64, GaussianDensity)> = (0..n_bern)
            .map(|_| (rng.gen_range(0.1..1.0), random_gaussian(&mut rng)))
            .collect();
        let ppp: Vec<(f64, GaussianDensity)> = (0..rng.gen_range(1..=2))
            .map(|_| (rng.gen_range(0.01..0.5), random_gaussian(&mut rng)))
            .collect();
        let m = rng.gen_range(1..=3);
        let measurements: Vec<DVector<f64>> = (0..m)
            .map(|_| DVector::from_fn(2, |_, _| rng.gen_range(-10.0..10.0)))
            .collect();
        let clutter = ClutterModel {
            rate: rng.gen_range(1.0..10.0),
            region: Region {
                x_min: -20.0,
                x_max: 20.0,
                y_min: -20.0,
                y_max: 20.0,
            },
        };

        // classical reference
        let point_scene = PointScene {
            ppp: ppp.clone(),
            bernoullis: bernoullis.clone(),
            measurements: measurements.clone(),
            meas_model: meas_model.clone(),
            clutter_intensity: clutter.intensity(),
        };
        let oracle = point_only_update(&point_scene).unwrap();

        // hybrid update restricted to the point model
        let mut pred = PMBMDensity::empty();
        pred.step = 1;
        for (i, (r, g)) in bernoullis.iter().enumerate() {
            pred.tracks.push(Track {
                id: i as u64,
                hypotheses: vec![LocalHypothesis {
                    log_weight: 0.0,
                    existence: *r,
                    density: Some(HybridSingleTargetDensity::point_only(g.clone())),
                    assoc_history: Vec::new(),
                }],
            });
        }
        pred.next_track_id = n_bern as u64;
        pred.globals = vec![GlobalHypothesis {
            weight: 1.0,
            choice: vec![0; n_bern],
        }];
        for (w, g) in &ppp {
            pred.ppp.point_components.push(WeightedGaussian {
                weight: *w,
                gaussian: g.clone(),
            });
        }
        let models = SensorModels {
            point: meas_model,
            extended: ExtendedMeasModel {
                obs_matrix: obs_matrix(),
                detection,
            },
        };
        let post = update(&pred, &measurements, &models, &clutter, &exact_config()).unwrap();
        compare_posteriors(
            &summarize_posterior(&post, pred.next_track_id),
            &summarize_oracle(&oracle),
            &format!("point scene {scene_idx}"),
        );
    }
}
