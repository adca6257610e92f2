//! Scratch harness for calibrating acquisition and meta-training settings.
//! Not part of the deliverable pipeline; see the CLI crate for the real one.

use std::time::Instant;

use umrl_core::env::{cmp_by_name, policy_for_cmp, Cmp};
use umrl_core::eval::{
    make_eval_tasks, run_method, HandcraftedTasks, Method, MethodInit, SharedEvalConfig,
};
use umrl_core::meta::{
    meta_train, Baseline, MetaConfig, MetaGradMode, MetaLearnerState, OptimizerKind,
    PolicyGradConfig, TaskSampler,
};
use umrl_core::numerics::RngSeed;
use umrl_core::tasks::{diayn_train, held_out_accuracy, random_discriminator, DiaynConfig};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let mode = args.get(1).map(|s| s.as_str()).unwrap_or("diayn");
    let cmp_name = args.get(2).map(|s| s.as_str()).unwrap_or("point_nav_2d");
    let seed: u64 = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(0);
    let cmp = cmp_by_name(cmp_name).unwrap();

    match mode {
        "diayn" => tune_diayn(&cmp, seed, &args),
        "meta" => tune_meta(&cmp, seed, &args),
        other => panic!("unknown mode {other}"),
    }
}

fn arg_f64(args: &[String], i: usize, default: f64) -> f64 {
    args.get(i).and_then(|s| s.parse().ok()).unwrap_or(default)
}

fn tune_diayn(cmp: &dyn Cmp, seed: u64, args: &[String]) {
    let mut cfg = DiaynConfig::default();
    cfg.iters = arg_f64(args, 4, cfg.iters as f64) as usize;
    cfg.entropy_weight = arg_f64(args, 5, cfg.entropy_weight);
    cfg.policy_lr = arg_f64(args, 6, cfg.policy_lr);
    cfg.disc_lr = arg_f64(args, 7, cfg.disc_lr);
    cfg.init_log_std = arg_f64(args, 8, cfg.init_log_std);
    println!("diayn cfg: {cfg:?}");
    let t0 = Instant::now();
    let iters = cfg.iters;
    let mut trainer = umrl_core::tasks::DiaynTrainer::new(cmp, cfg, seed).unwrap();
    for i in 0..iters {
        let d = trainer.step().unwrap();
        if i % 25 == 0 || i + 1 == iters {
            println!(
                "iter {:4}  acc {:.3}  pseudo {:+.3}  MI {:.3}  H[a|s,z] {:+.3}",
                i,
                d.disc_accuracy,
                d.avg_pseudo_reward,
                d.objective.mutual_information_bound(),
                d.objective.policy_entropy
            );
        }
    }
    let (_td, state) = trainer.finish();
    let heldout = held_out_accuracy(cmp, &state, 64, RngSeed::new(seed).substream("ho")).unwrap();
    println!(
        "held-out acc {:.3} (chance {:.3})  wall {:?}",
        heldout,
        1.0 / state.num_skills as f64,
        t0.elapsed()
    );
}

fn tune_meta(cmp: &dyn Cmp, seed: u64, args: &[String]) {
    let source = args.get(4).map(|s| s.as_str()).unwrap_or("diayn");
    let alpha = arg_f64(args, 5, 0.05);
    let outer_lr = arg_f64(args, 6, 3e-3);
    let meta_iters = arg_f64(args, 7, 100.0) as usize;
    let init_log_std = arg_f64(args, 8, 0.0);
    let rollouts = arg_f64(args, 9, 20.0) as usize;
    let eval_tasks = arg_f64(args, 10, 8.0) as usize;

    let t0 = Instant::now();
    let sampler: Box<dyn TaskSampler> = match source {
        "diayn" => {
            let cfg = DiaynConfig::default();
            let (td, _state) = diayn_train(cmp, cfg, seed).unwrap();
            println!("diayn acquired in {:?}", t0.elapsed());
            Box::new(td)
        }
        "random" => Box::new(random_discriminator(cmp, 8, &[64, 64], seed).unwrap()),
        "handcrafted" => Box::new(HandcraftedTasks::new(cmp.name(), false).unwrap()),
        other => panic!("unknown source {other}"),
    };

    let policy = policy_for_cmp(cmp, &[64, 64], init_log_std);
    let inner_steps = arg_f64(args, 11, 1.0) as usize;
    let meta_cfg = MetaConfig {
        inner: PolicyGradConfig {
            step_size: alpha,
            rollouts_per_task: rollouts,
            baseline: Baseline::PerTimestepMean,
            entropy_bonus: 0.0,
        },
        inner_steps,
        tasks_per_batch: 20,
        outer_kind: OptimizerKind::Adam,
        outer_step_size: outer_lr,
        mode: MetaGradMode::FirstOrder,
    };
    let mut state = MetaLearnerState::new(policy.clone(), &meta_cfg, seed).unwrap();
    let t1 = Instant::now();
    for i in 0..meta_iters {
        let s = state.meta_step(cmp, sampler.as_ref()).unwrap();
        if i % 10 == 0 || i + 1 == meta_iters {
            println!(
                "meta {:4}  pre {:+8.2}  post {:+8.2}  |g| {:8.2}  ({:.1?}/iter)",
                i,
                s.pre_adapt_return,
                s.post_adapt_return,
                s.grad_norm,
                t1.elapsed() / (i as u32 + 1)
            );
        }
    }
    println!("meta-train wall {:?}", t1.elapsed());
    if let Ok(ls) = state.theta.segment("log_std") {
        println!("meta theta log_std: {ls:?}");
    }
    {
        // Gradient scale on one eval task vs one diayn-style task.
        let eval_probe = make_eval_tasks(cmp.name(), 1, 9001).unwrap();
        let r = umrl_core::eval::build_eval_reward(&eval_probe.tasks[0]).unwrap();
        let g = umrl_core::meta::policy_gradient_estimate(
            cmp, &policy, &state.theta, r.as_ref(), &meta_cfg.inner, RngSeed::new(123),
        )
        .unwrap();
        println!("eval-task grad norm at theta: {:.3}", g.l2_norm());
    }

    // Meta-test: meta-trained vs scratch on held-out tasks.
    let eval = make_eval_tasks(cmp.name(), eval_tasks, 9001).unwrap();
    let shared = SharedEvalConfig {
        inner: meta_cfg.inner.clone(),
        n_steps: 25,
        eval_rollouts: 20,
    };
    let t2 = Instant::now();
    let trained = run_method(
        cmp,
        &policy,
        Method::UmlDiayn,
        &MethodInit::Params(&state.theta),
        &eval,
        &shared,
        seed,
    )
    .unwrap();
    let scratch = run_method(
        cmp,
        &policy,
        Method::Scratch,
        &MethodInit::ScratchPerTask,
        &eval,
        &shared,
        seed,
    )
    .unwrap();
    println!("eval wall {:?}", t2.elapsed());
    for step in [0usize, 1, 2, 5, 10, 25] {
        println!(
            "step {:2}  trained {:+8.2} ± {:5.2}   scratch {:+8.2} ± {:5.2}",
            step, trained.mean[step], trained.stderr[step], scratch.mean[step], scratch.stderr[step]
        );
    }
}
