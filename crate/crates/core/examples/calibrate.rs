// Calibration harness: trains small models across settings and prints
// recall / fairness numbers per seed. Not part of the test suite.
use fdrec_core::data::{
    assign_groups, build_matrix, split as make_split, Attribute, GroupThresholds,
    NormalizationScheme, SplitRatios,
};
use fdrec_core::diffusion::{build_schedule, predict_matrix, train, LossHistory, TrainConfig};
use fdrec_core::eval::{ndcg_at_k, rank_topk, recall_at_k, PredictionMatrix};
use fdrec_core::groups::{counterfactual_targets, mean_pool};
use fdrec_core::model::{ModelDims, ModelVariant, NoisePredictor};
use fdrec_core::nn::{AdamHyper, AdamState};
use fdrec_core::synth::{generate, SynthConfig};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let get = |name: &str, default: f64| -> f64 {
        args.iter()
            .position(|a| a == name)
            .and_then(|i| args.get(i + 1))
            .and_then(|v| v.parse().ok())
            .unwrap_or(default)
    };
    let n_users = get("--users", 50.0) as usize;
    let n_items = get("--items", 80.0) as usize;
    let bias = get("--bias", 2.0);
    let scale = get("--scale", 0.8);
    let epochs = get("--epochs", 4000.0) as usize;
    let batch = get("--batch", 16.0) as usize;
    let lr = get("--lr", 3e-3);
    let t_steps = get("--t", 20.0) as usize;
    let t_start = get("--tstart", t_steps as f64) as usize;
    let hidden = get("--hidden", 128.0) as usize;
    let feat = get("--feat", 64.0) as usize;
    let k = get("--k", 5.0) as usize;
    let ensemble = get("--ensemble", 4.0) as usize;
    let seeds = get("--seeds", 3.0) as u64;
    let clusters = get("--clusters", 8.0) as usize;
    let variant = match get("--variant", 0.0) as i64 {
        1 => ModelVariant::NoEncoder,
        2 => ModelVariant::NoCounterfactual,
        _ => ModelVariant::Base,
    };

    for seed in 1..=seeds {
        let ds = generate(&SynthConfig {
            n_users,
            n_items,
            minority_frac: 0.3,
            bias,
            obs_min: 24,
            obs_max: 40,
            n_clusters: clusters,
            seed,
        });
        let (ds, _) = ds.filter_min_interactions(13);
        let matrix = build_matrix(&ds, NormalizationScheme::MinMax).unwrap();
        let sp = make_split(&matrix, SplitRatios::default(), 10, seed).unwrap();
        let groups = assign_groups(&ds, Attribute::Gender, GroupThresholds::default()).unwrap();
        let vectors = mean_pool(&matrix, &sp, &groups).unwrap();
        let targets = counterfactual_targets(&matrix, &groups, &vectors).unwrap();
        let sched = build_schedule(t_steps, scale, 1e-4).unwrap();
        let dims = ModelDims {
            n_items: matrix.n_items,
            t_max: t_steps,
            time_dim: 16,
            mlp1_hidden: hidden,
            feat_dim: feat,
            enc_hidden: feat,
            mlp3_hidden: hidden,
            attn_tokens: 2,
            attn_token_dim: feat / 2,
        };
        let mut model = NoisePredictor::new(dims, variant, seed);
        let mut adam = AdamState::new(
            AdamHyper {
                learning_rate: lr,
                ..Default::default()
            },
            &model.block_layout(),
        );
        let mut history = LossHistory::default();
        let tc = TrainConfig {
            epochs,
            batch_size: batch,
            seed,
        };
        train(
            &mut model, &matrix, &sp, &targets, &sched, &tc, &mut adam, 0, &mut history,
        )
        .unwrap();

        let values = predict_matrix(
            &model, &sched, &matrix, &sp, &targets, t_start, ensemble, seed,
        )
        .unwrap();
        let preds = PredictionMatrix {
            n_items: matrix.n_items,
            n_users: matrix.n_users,
            values,
            normalization: matrix.normalization,
        };
        let lists = rank_topk(&preds, &sp, k).unwrap();
        let recall = recall_at_k(&lists, &sp).unwrap();
        let ndcg = ndcg_at_k(&lists, &sp).unwrap();

        // Random-ranking baseline on the same split.
        let mut rng = fdrec_core::rng::stream(seed, "random-baseline", 0);
        let rand_values: Vec<f64> = (0..matrix.n_items * matrix.n_users)
            .map(|_| fdrec_core::rng::normal(&mut rng))
            .collect();
        let rand_preds = PredictionMatrix {
            n_items: matrix.n_items,
            n_users: matrix.n_users,
            values: rand_values,
            normalization: matrix.normalization,
        };
        let rand_lists = rank_topk(&rand_preds, &sp, k).unwrap();
        let rand_recall = recall_at_k(&rand_lists, &sp).unwrap();

        println!(
            "seed {seed} [{variant:?} scale={scale} ep={epochs}]: loss {:.2} -> {:.2} | recall {recall:.4} vs random {rand_recall:.4} (x{:.2}) ndcg {ndcg:.4}",
            history.per_epoch[0],
            history.per_epoch.last().unwrap(),
            recall / rand_recall.max(1e-9),
        );
    }
}
