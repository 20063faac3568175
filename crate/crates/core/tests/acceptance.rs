//! Acceptance checks, one line per criterion.
//!
//! Criteria 8-10 read the artifacts of a finished `locomimic ablate` run from
//! `$LOCOMIMIC_ABLATION` (default `results/desk` at the workspace root).
//! They grade a long stochastic training run rather than the code, so their
//! verdicts are printed but only criteria 1-7 and 11 set the exit status.
//! `ACCEPTANCE_STRICT=1` makes every failure count.

use std::path::PathBuf;
use std::time::Instant;

use ndarray::{Array1, Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use locomimic::adversary::{gradient_penalty, lsgan_loss, mode_coverage, wgan_div_loss_at, Criterion, ModeCoverageConfig};
use locomimic::config::RunConfig;
use locomimic::curiosity::{curiosity_reward, CountTable, HashCode, SimHash};
use locomimic::evalkit::{dtw, read_ablation_csv};
use locomimic::him::{contrastive_loss, velocity_loss};
use locomimic::motion::{fk_two_link, ik_two_link, mirror_error, MotionDataset, SYMMETRY_TOLERANCE};
use locomimic::net::{Activation, GradTape, NetParams, NetSpec};
use locomimic::runs::{resume_run, train_run, RunManifest, RunStatus};
use locomimic::sim::{task_rewards, Command, RewardParams, RewardWeights, SimState, REWARD_TERMS};
use locomimic::trainer::{actor_loss, train_point_mass, value_loss, TrainConfig};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn normal(r: &mut ChaCha8Rng) -> f64 {
    r.sample(StandardNormal)
}

// ---------------------------------------------------------------- 1

fn random_state(r: &mut ChaCha8Rng) -> SimState {
    let mut s = SimState::zeroed(4);
    s.base_pos = [r.random_range(-1.0..1.0), r.random_range(0.4..0.9)];
    s.base_lin_vel = [r.random_range(-1.5..1.5), r.random_range(-0.5..0.5)];
    for side in 0..2 {
        s.foot_contact[side] = r.random_bool(0.5);
        s.foot_vel[side] = [r.random_range(-0.6..0.6), r.random_range(-0.3..0.3)];
        s.foot_force[side] = [r.random_range(-150.0..150.0), r.random_range(0.0..400.0)];
    }
    s
}

/// Task terms written out from their definitions, sharing no code with the simulator.
fn oracle_terms(s: &SimState, p: &SimState, cmd: &Command, a: [&[f64]; 3], f_max: f64, dt: f64) -> [f64; 6] {
    let mut slip = 0.0;
    let mut force = 0.0;
    for k in 0..2 {
        let c = if s.foot_contact[k] { 1.0 } else { 0.0 };
        slip += c * (s.foot_vel[k][0] * s.foot_vel[k][0]).sqrt();
        let mag = (s.foot_force[k][0].powi(2) + s.foot_force[k][1].powi(2)).sqrt();
        force += if mag > f_max { mag - f_max } else { 0.0 };
    }
    // lateral velocity and yaw rate of a planar body are zero
    let ex = cmd.lin_vel[0] - s.base_lin_vel[0];
    let ey = cmd.lin_vel[1] - 0.0;
    let lin = f64::exp(-4.0 * (ex.powi(2) + ey.powi(2)));
    let ang = f64::exp(-4.0 * (cmd.yaw_rate - 0.0).powi(2));
    let acc = [(s.base_lin_vel[0] - p.base_lin_vel[0]) / dt, (s.base_lin_vel[1] - p.base_lin_vel[1]) / dt];
    let root = f64::exp(-(acc[0].powi(2) + acc[1].powi(2)).sqrt().powi(3));
    let smooth = (0..a[0].len()).map(|j| (a[0][j] - 2.0 * a[1][j] + a[2][j]).powi(2)).sum();
    [slip, force, lin, ang, root, smooth]
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * (1.0 + b.abs())
}

fn criterion_1() -> Outcome {
    let weights = [-0.05, -0.01, 2.4, 1.1, 0.2, -0.01];
    if RewardWeights::default().0 != weights {
        return outcome(false, format!("default weights {:?}", RewardWeights::default().0));
    }
    let params = RewardParams { weights: RewardWeights::default(), f_max: 200.0, control_dt: 0.02 };
    let mut r = rng(1);
    let mut worst: f64 = 0.0;
    for i in 0..50 {
        let s = random_state(&mut r);
        let mut p = s.clone();
        p.base_lin_vel[0] += r.random_range(-0.05..0.05);
        p.base_lin_vel[1] += r.random_range(-0.05..0.05);
        // a few exact-tracking and zero-acceleration states
        if i % 10 == 0 {
            p.base_lin_vel = s.base_lin_vel;
        }
        let mut cmd = Command::forward(r.random_range(-0.5..1.0));
        if i % 7 == 0 {
            cmd.lin_vel[0] = s.base_lin_vel[0];
        }
        if i % 5 == 1 {
            cmd.lin_vel[1] = r.random_range(-0.2..0.2);
            cmd.yaw_rate = r.random_range(-0.5..0.5);
        }
        let acts: Vec<Vec<f64>> = (0..3).map(|_| (0..4).map(|_| r.random_range(-1.0..1.0)).collect()).collect();
        let hist = [acts[0].as_slice(), acts[1].as_slice(), acts[2].as_slice()];
        let got = task_rewards(&s, &p, &cmd, hist, &params);
        let want = oracle_terms(&s, &p, &cmd, hist, params.f_max, params.control_dt);
        let mut sum = 0.0;
        for k in 0..6 {
            let t = &got.terms[k];
            if t.name != REWARD_TERMS[k] || !close(t.raw, want[k], 1e-12) || !close(t.weighted, weights[k] * want[k], 1e-12) {
                return outcome(false, format!("state {i} term {} got {} want {}", t.name, t.raw, want[k]));
            }
            worst = worst.max((t.raw - want[k]).abs());
            sum += weights[k] * want[k];
        }
        if !close(got.total, sum, 1e-12) {
            return outcome(false, format!("state {i} total {} want {sum}", got.total));
        }
    }
    outcome(true, format!("50 states, max raw deviation {worst:.1e}"))
}

// ---------------------------------------------------------------- 2

fn criterion_2() -> Outcome {
    let dim = 6;
    let hash = SimHash::new(dim, 8, &mut rng(2)).expect("hash");
    // scripted visits: a slow orbit with repeats so counts grow past 1
    let visits: Vec<Vec<f64>> = (0..1000)
        .map(|t| {
            let ph = (t % 97) as f64 * 0.37;
            (0..dim).map(|k| (ph + k as f64).sin() + 0.1 * ((t / 97) as f64)).collect()
        })
        .collect();
    let codes: Vec<HashCode> = visits.iter().map(|v| hash.hash(v).expect("hash")).collect();

    let mut table = CountTable::new(8);
    for (t, c) in codes.iter().enumerate() {
        let n = table.observe_and_count(*c).expect("count");
        let brute = codes[..=t].iter().filter(|d| *d == c).count() as u64;
        let r = curiosity_reward(n).expect("reward");
        if n != brute || r.to_bits() != (1.0 / (brute as f64).sqrt()).to_bits() {
            return outcome(false, format!("step {t}: count {n} vs {brute}"));
        }
    }

    let workers = 8;
    let shards: Vec<CountTable> = std::thread::scope(|s| {
        let handles: Vec<_> = (0..workers)
            .map(|w| {
                let codes = &codes;
                s.spawn(move || {
                    let mut t = CountTable::new(8);
                    for c in codes.iter().skip(w).step_by(workers) {
                        t.observe_and_count(*c).expect("count");
                    }
                    t
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("worker")).collect()
    });
    let shard_total: u64 = shards.iter().map(CountTable::total).sum();
    let mut merged = CountTable::new(8);
    for s in &shards {
        merged.merge(s).expect("merge");
    }
    let counts_match = codes.iter().all(|c| merged.count(*c) == table.count(*c));
    let ok = shard_total == 1000 && merged.total() == 1000 && counts_match;
    outcome(
        ok,
        format!("1000 visits, {} distinct codes, 8 shards sum {shard_total}, merged counts match {counts_match}", table.distinct()),
    )
}

// ---------------------------------------------------------------- 3

fn small_net(input: usize, output: usize, act: Activation, seed: u64) -> NetParams {
    NetParams::init(NetSpec::mlp(input, &[16, 16, 16], output, act), 1.0, &mut rng(seed)).expect("net")
}

fn randn(rows: usize, cols: usize, r: &mut ChaCha8Rng) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| normal(r))
}

/// Normwise relative error between `analytic` and central differences of `f`.
fn fd_rel_error(x0: &[f64], analytic: &[f64], f: &dyn Fn(&[f64]) -> f64) -> f64 {
    let h = 1e-6;
    let mut x = x0.to_vec();
    let mut num = vec![0.0; x0.len()];
    for i in 0..x0.len() {
        x[i] = x0[i] + h;
        let fp = f(&x);
        x[i] = x0[i] - h;
        let fm = f(&x);
        x[i] = x0[i];
        num[i] = (fp - fm) / (2.0 * h);
    }
    let diff: f64 = analytic.iter().zip(&num).map(|(a, n)| (a - n).powi(2)).sum::<f64>().sqrt();
    let scale: f64 = num.iter().map(|n| n * n).sum::<f64>().sqrt().max(analytic.iter().map(|a| a * a).sum::<f64>().sqrt());
    if scale == 0.0 { diff } else { diff / scale }
}

fn with_params(p: &NetParams, flat: &[f64]) -> NetParams {
    let mut q = p.clone();
    q.set_flat(flat).expect("flat");
    q
}

/// Gradient of a loss on the net output, pulled back to the parameters.
fn output_loss_check(net: &NetParams, x: &Array2<f64>, loss: &dyn Fn(&Array2<f64>) -> (f64, Array2<f64>)) -> f64 {
    let cache = net.forward(x.view()).expect("forward");
    let (_, g) = loss(cache.output());
    let tape: GradTape = net.backward(&cache, g.view()).expect("backward");
    fd_rel_error(&net.flat(), &tape.flat(), &|w| loss(&with_params(net, w).predict(x.view()).expect("predict")).0)
}

fn criterion_3() -> Outcome {
    let mut r = rng(3);
    let n = 24;
    let mut errs: Vec<(&str, f64, f64)> = Vec::new();

    // policy surrogate over net weights and log-std
    let actor = small_net(5, 2, Activation::Elu, 30);
    let obs = randn(n, 5, &mut r);
    let acts = randn(n, 2, &mut r);
    let log_std = vec![-0.3, 0.2];
    let mean = actor.predict(obs.view()).expect("predict");
    let old: Array1<f64> = (0..n)
        .map(|i| {
            let lp: f64 = (0..2)
                .map(|j| {
                    let z = (acts[[i, j]] - mean[[i, j]]) * (-log_std[j] as f64).exp();
                    -0.5 * z * z - log_std[j] - 0.5 * (2.0 * std::f64::consts::PI).ln()
                })
                .sum();
            lp + 0.3 * normal(&mut r)
        })
        .collect();
    let adv: Array1<f64> = (0..n).map(|_| normal(&mut r)).collect();
    let zero_adv = Array1::zeros(n);
    let np = actor.num_params();
    for (name, advs, coef) in [("surrogate", &adv, 0.0), ("entropy", &zero_adv, 1.0)] {
        let (_, _, g) = actor_loss(&actor, &log_std, obs.view(), acts.view(), old.view(), advs.view(), 0.2, coef).expect("actor loss");
        let mut analytic = g.net.flat();
        analytic.extend(&g.log_std);
        let mut x0 = actor.flat();
        x0.extend(&log_std);
        let f = |w: &[f64]| {
            let a = with_params(&actor, &w[..np]);
            actor_loss(&a, &w[np..], obs.view(), acts.view(), old.view(), advs.view(), 0.2, coef).expect("loss").0
        };
        errs.push((name, fd_rel_error(&x0, &analytic, &f), 1e-4));
    }

    let critic = small_net(5, 1, Activation::Elu, 31);
    let ret: Array1<f64> = (0..n).map(|_| normal(&mut r)).collect();
    let (_, g) = value_loss(&critic, obs.view(), ret.view()).expect("value");
    let e = fd_rel_error(&critic.flat(), &g.flat(), &|w| value_loss(&with_params(&critic, w), obs.view(), ret.view()).expect("v").0);
    errs.push(("value_mse", e, 1e-4));

    let disc = small_net(4, 1, Activation::Tanh, 32);
    let real = randn(n, 4, &mut r);
    let fake = randn(n, 4, &mut r) * 0.7 + 0.5;
    let (_, g) = lsgan_loss(&disc, real.view(), fake.view()).expect("lsgan");
    let e = fd_rel_error(&disc.flat(), &g.flat(), &|w| lsgan_loss(&with_params(&disc, w), real.view(), fake.view()).expect("l").0);
    errs.push(("lsgan", e, 1e-4));

    let interp = randn(n, 4, &mut r);
    let (k, p) = (2.0, 6.0);
    let (_, g) = wgan_div_loss_at(&disc, real.view(), fake.view(), interp.view(), k, p).expect("wgan");
    let e = fd_rel_error(&disc.flat(), &g.flat(), &|w| {
        wgan_div_loss_at(&with_params(&disc, w), real.view(), fake.view(), interp.view(), k, p).expect("w").0
    });
    errs.push(("wgan_div", e, 1e-3));
    let (_, g) = gradient_penalty(&disc, interp.view(), k, p).expect("penalty");
    let e = fd_rel_error(&disc.flat(), &g.flat(), &|w| gradient_penalty(&with_params(&disc, w), interp.view(), k, p).expect("gp").0);
    errs.push(("wgan_penalty", e, 1e-3));

    let enc = small_net(6, 3, Activation::Elu, 33);
    let x = randn(n, 6, &mut r);
    let v_true = randn(n, 3, &mut r);
    errs.push(("velocity_mse", output_loss_check(&enc, &x, &|o| velocity_loss(o.view(), v_true.view()).expect("vl")), 1e-4));

    let enc = small_net(6, 8, Activation::Elu, 34);
    let mut targets = randn(n, 8, &mut r);
    for mut row in targets.axis_iter_mut(Axis(0)) {
        let norm = row.dot(&row).sqrt();
        row /= norm;
    }
    errs.push(("info_nce", output_loss_check(&enc, &x, &|o| contrastive_loss(o.view(), targets.view(), 0.1).expect("nce")), 1e-4));

    let pass = errs.iter().all(|(_, e, tol)| e.is_finite() && e <= tol);
    let detail = errs.iter().map(|(n, e, _)| format!("{n} {e:.1e}")).collect::<Vec<_>>().join(", ");
    outcome(pass, detail)
}

// ---------------------------------------------------------------- 4

/// All monotone warping paths of an n x m grid as flat cell indices.
fn all_paths(n: usize, m: usize) -> Vec<Vec<usize>> {
    fn go(i: usize, j: usize, n: usize, m: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        cur.push(i * m + j);
        if i + 1 == n && j + 1 == m {
            out.push(cur.clone());
        } else {
            if i + 1 < n {
                go(i + 1, j, n, m, cur, out);
            }
            if j + 1 < m {
                go(i, j + 1, n, m, cur, out);
            }
            if i + 1 < n && j + 1 < m {
                go(i + 1, j + 1, n, m, cur, out);
            }
        }
        cur.pop();
    }
    let mut out = Vec::new();
    go(0, 0, n, m, &mut Vec::new(), &mut out);
    out
}

fn sequences(len: usize) -> Vec<Vec<u8>> {
    (0..3usize.pow(len as u32))
        .map(|mut k| {
            (0..len)
                .map(|_| {
                    let d = (k % 3) as u8;
                    k /= 3;
                    d
                })
                .collect()
        })
        .collect()
}

fn criterion_4() -> Outcome {
    let seqs: Vec<Vec<Vec<u8>>> = (0..=6).map(sequences).collect();
    let as_frames = |s: &[u8]| s.iter().map(|&v| vec![f64::from(v)]).collect::<Vec<_>>();
    let mut pairs = 0u64;
    for n in 1..=6 {
        for m in n..=6 {
            let paths = all_paths(n, m);
            let mut cost = vec![0u32; n * m];
            for a in &seqs[n] {
                let fa = as_frames(a);
                for b in &seqs[m] {
                    for i in 0..n {
                        for j in 0..m {
                            cost[i * m + j] = u32::from(a[i].abs_diff(b[j]));
                        }
                    }
                    let brute = paths.iter().map(|p| p.iter().map(|&c| cost[c]).sum::<u32>()).min().expect("paths");
                    let fb = as_frames(b);
                    let ab = dtw(&fa, &fb).expect("dtw").distance;
                    let ba = dtw(&fb, &fa).expect("dtw").distance;
                    if ab != f64::from(brute) || ba != ab {
                        return outcome(false, format!("{a:?} vs {b:?}: dtw {ab}/{ba}, brute force {brute}"));
                    }
                    pairs += 1;
                }
                if dtw(&fa, &fa).expect("dtw").distance != 0.0 {
                    return outcome(false, format!("dtw({a:?}, itself) != 0"));
                }
            }
        }
    }
    outcome(true, format!("{pairs} pairs (both argument orders) match path enumeration"))
}

// ---------------------------------------------------------------- 5

fn criterion_5() -> Outcome {
    let cfg = RunConfig::default();
    let (l1, l2) = cfg.morphology.two_link().expect("two-link legs");
    let mut r = rng(5);
    let hip = [0.1, 0.6];
    let mut worst: f64 = 0.0;
    for _ in 0..10_000 {
        let d = r.random_range((l1 - l2).abs() * 1.001..(l1 + l2) * 0.999);
        let ang = r.random_range(-std::f64::consts::PI..std::f64::consts::PI);
        let target = [hip[0] + d * ang.cos(), hip[1] + d * ang.sin()];
        let (h, k) = match ik_two_link(hip, target, l1, l2) {
            Ok(v) => v,
            Err(e) => return outcome(false, format!("IK failed on reachable target: {e}")),
        };
        let (_, foot) = fk_two_link(hip, h, k, l1, l2);
        worst = worst.max((foot[0] - target[0]).hypot(foot[1] - target[1]));
    }
    let ds = match MotionDataset::default_set(&cfg.morphology, cfg.sim.control_dt(), cfg.train.clip_duration_s) {
        Ok(d) => d,
        Err(e) => return outcome(false, format!("retargeting failed: {e}")),
    };
    let mirror = ds.clips().iter().map(mirror_error).fold(0.0, f64::max);
    outcome(
        worst < 1e-9 && mirror < SYMMETRY_TOLERANCE,
        format!("max FK(IK) residual {worst:.1e} m over 1e4 targets, max mirror error {mirror:.1e} rad over {} clips", ds.clips().len()),
    )
}

// ---------------------------------------------------------------- 6

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) }
}

fn criterion_6() -> Outcome {
    let cfg = ModeCoverageConfig::default();
    let mut out = Vec::new();
    for c in [Criterion::WganDiv, Criterion::Lsgan] {
        let mut counts = Vec::new();
        for seed in 0..5 {
            match mode_coverage(c, seed, &cfg) {
                Ok(m) => counts.push(m.recovered as f64),
                Err(e) => return outcome(false, format!("{c:?} seed {seed}: {e}")),
            }
        }
        let shown = counts.clone();
        out.push((median(&mut counts), shown));
    }
    outcome(
        out[0].0 >= out[1].0,
        format!(
            "modes recovered of {}: wgan_div median {} {:?}, lsgan median {} {:?}",
            cfg.ring.modes, out[0].0, out[0].1, out[1].0, out[1].1
        ),
    )
}

// ---------------------------------------------------------------- 7

fn criterion_7() -> Outcome {
    let cfg = TrainConfig::default();
    let mut firsts = Vec::new();
    for seed in 0..3 {
        match train_point_mass(&cfg, seed, 300, Some(0.9)) {
            Ok(rep) => firsts.push(rep.first_reaching(0.9).map(|i| i + 1)),
            Err(e) => return outcome(false, format!("seed {seed}: {e}")),
        }
    }
    let pass = firsts.iter().all(Option::is_some);
    outcome(pass, format!("iteration reaching mean tracking reward 0.9, seeds 0-2: {firsts:?}"))
}

// ---------------------------------------------------------------- 8-10

fn ablation_dir() -> PathBuf {
    std::env::var_os("LOCOMIMIC_ABLATION")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../results/desk"))
}

/// `(arm, seed) -> column values` from the per-cell evaluation summary.
fn eval_summary(cols: &[&str]) -> Result<Vec<(String, Vec<f64>)>, String> {
    let path = ablation_dir().join("eval_summary.csv");
    let mut rd = csv::Reader::from_path(&path).map_err(|e| format!("{}: {e}", path.display()))?;
    let header = rd.headers().map_err(|e| e.to_string())?.clone();
    let idx: Vec<usize> = cols
        .iter()
        .map(|c| header.iter().position(|h| h == *c).ok_or(format!("missing column {c}")))
        .collect::<Result<_, _>>()?;
    let mut out = Vec::new();
    for rec in rd.records() {
        let rec = rec.map_err(|e| e.to_string())?;
        let vals = idx.iter().map(|&i| rec[i].parse::<f64>().unwrap_or(f64::NAN)).collect();
        out.push((rec[0].to_string(), vals));
    }
    Ok(out)
}

fn criterion_8() -> Outcome {
    let rows = match eval_summary(&["him_velocity_mae", "him_zero_mae", "him_probe_accuracy"]) {
        Ok(r) => r,
        Err(e) => return outcome(false, format!("no ablation artifacts: {e}")),
    };
    let cells: Vec<&Vec<f64>> = rows.iter().filter(|(a, _)| a == "amp_him").map(|(_, v)| v).collect();
    if cells.is_empty() {
        return outcome(false, "no amp_him cells in eval_summary.csv");
    }
    let others: Vec<String> = ["ampw_him", "ampw_him_plus"]
        .iter()
        .filter_map(|arm| {
            let mut r: Vec<f64> = rows.iter().filter(|(a, _)| a == arm).map(|(_, v)| v[0] / v[1]).collect();
            (!r.is_empty()).then(|| format!("{arm} {:.3}", median(&mut r)))
        })
        .collect();
    let mut ratio: Vec<f64> = cells.iter().map(|v| v[0] / v[1]).collect();
    let mut acc: Vec<f64> = cells.iter().map(|v| v[2]).collect();
    let shown = (ratio.clone(), acc.clone());
    let (mr, ma) = (median(&mut ratio), median(&mut acc));
    outcome(
        mr < 0.5 && ma >= 0.8,
        format!(
            "amp_him median over {} seeds: velocity MAE / zero-predictor MAE {mr:.3} {:.3?}, walk/run probe accuracy {ma:.3} {:.3?}; other estimator arms' ratio: {}",
            cells.len(),
            shown.0,
            shown.1,
            if others.is_empty() { "none".to_string() } else { others.join(", ") }
        ),
    )
}

fn criterion_9() -> Outcome {
    let dir = ablation_dir();
    let rows = match read_ablation_csv(&dir.join("ablation_table.csv")) {
        Ok(r) => r,
        Err(e) => return outcome(false, format!("no ablation artifacts: {e}")),
    };
    let budget = match RunManifest::read(&dir.join("amp-s0")) {
        Ok(m) => m.iterations_completed,
        Err(_) => {
            // summaries only: take the iteration count from the cell table
            let mut rd = match csv::Reader::from_path(dir.join("ablation_cells.csv")) {
                Ok(r) => r,
                Err(e) => return outcome(false, format!("ablation_cells.csv: {e}")),
            };
            rd.records().filter_map(Result::ok).filter_map(|r| r[3].parse::<usize>().ok()).min().unwrap_or(0)
        }
    };
    let get = |arm: &str| rows.iter().find(|r| r.arm == arm);
    let (Some(amp), Some(him), Some(plus)) = (get("amp"), get("amp_him"), get("ampw_him_plus")) else {
        return outcome(false, "ablation table lacks amp, amp_him or ampw_him_plus");
    };
    let complete = rows.iter().all(|r| r.complete && r.seeds >= 3) && budget >= 1000;
    let pass = complete && plus.median >= amp.median && him.median >= amp.median;
    let all = rows.iter().map(|r| format!("{} {:.3}", r.arm, r.median)).collect::<Vec<_>>().join(", ");
    outcome(pass, format!("median windowed return ({budget} iterations, complete {complete}): {all}"))
}

fn criterion_10() -> Outcome {
    let rows = match eval_summary(&["tracking_out_of_range_mae", "tracking_in_range_mae"]) {
        Ok(r) => r,
        Err(e) => return outcome(false, format!("no ablation artifacts: {e}")),
    };
    let arm = |name: &str| -> Vec<f64> { rows.iter().filter(|(a, _)| a == name).map(|(_, v)| v[0]).collect() };
    let (mut amp, mut him) = (arm("amp"), arm("amp_him"));
    if amp.is_empty() || him.is_empty() {
        return outcome(false, "eval_summary.csv lacks amp or amp_him cells");
    }
    let shown = (amp.clone(), him.clone());
    let (ma, mh) = (median(&mut amp), median(&mut him));
    outcome(
        mh < ma,
        format!("out-of-range tracking MAE median: amp_him {mh:.4} {:.4?}, amp {ma:.4} {:.4?}", shown.1, shown.0),
    )
}

// ---------------------------------------------------------------- 11

fn tiny_config() -> RunConfig {
    let text = "train.iterations = 4\ntrain.checkpoint_every = 2\ntrain.num_envs = 8\ntrain.horizon = 16\n\
                train.actor_hidden = [32, 32]\ntrain.critic_hidden = [32, 32]\nadversary.hidden = [32]\nadversary.batch_size = 64\n\
                him.hidden = [32]\ntrain.use_curiosity = true\nadversary.criterion = wgan_div\nadversary.reward_map = bounded_sigmoid\n";
    RunConfig::from_text(text, "acceptance").expect("tiny config")
}

fn criterion_11() -> Outcome {
    let tmp = match tempfile::tempdir() {
        Ok(t) => t,
        Err(e) => return outcome(false, e.to_string()),
    };
    let run = |name: &str| -> Result<Vec<u8>, String> {
        let dir = tmp.path().join(name);
        train_run(tiny_config(), &dir, name, &mut |_| {}).map_err(|e| e.to_string())?;
        std::fs::read(dir.join("metrics.csv")).map_err(|e| e.to_string())
    };
    let (a, b) = match (run("a"), run("b")) {
        (Ok(a), Ok(b)) => (a, b),
        (Err(e), _) | (_, Err(e)) => return outcome(false, e),
    };
    let identical = a == b;

    // rewind run b to its iteration-2 checkpoint and resume
    let dir = tmp.path().join("b");
    let rewind = || -> Result<Vec<u8>, String> {
        std::fs::write(dir.join("checkpoints/latest"), "iter_000002").map_err(|e| e.to_string())?;
        let mut m = RunManifest::read(&dir).map_err(|e| e.to_string())?;
        m.status = RunStatus::Running;
        m.iterations_completed = 2;
        m.write(&dir).map_err(|e| e.to_string())?;
        resume_run(&dir, &mut |_| {}).map_err(|e| e.to_string())?;
        std::fs::read(dir.join("metrics.csv")).map_err(|e| e.to_string())
    };
    let resumed = match rewind() {
        Ok(r) => r,
        Err(e) => return outcome(false, format!("resume failed: {e}")),
    };
    let resumed_same = resumed == a;
    let lines = String::from_utf8_lossy(&a).lines().count();
    outcome(
        identical && resumed_same,
        format!("two runs bit-identical {identical}; resume from iteration 2 reproduces iterations 3-4 {resumed_same} ({lines} metric lines)"),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 11] = [
        ("reward formulas exact", criterion_1),
        ("curiosity exactness", criterion_2),
        ("gradient suite", criterion_3),
        ("dtw oracle", criterion_4),
        ("ik round-trip", criterion_5),
        ("mode coverage", criterion_6),
        ("ppo smoke", criterion_7),
        ("him estimator", criterion_8),
        ("ablation ordering", criterion_9),
        ("tracking proxy", criterion_10),
        ("determinism and resume", criterion_11),
    ];
    let only: Option<Vec<usize>> = std::env::var("ACCEPTANCE_ONLY")
        .ok()
        .map(|s| s.split(',').filter_map(|t| t.trim().parse().ok()).collect());
    let strict = std::env::var("ACCEPTANCE_STRICT").is_ok_and(|v| v == "1");
    let mut failed = Vec::new();
    let mut gating = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let k = i + 1;
        if only.as_ref().is_some_and(|o| !o.contains(&k)) {
            continue;
        }
        let t = Instant::now();
        let o = f();
        let verdict = if o.pass { "PASS" } else { "FAIL" };
        if !o.pass {
            failed.push(k);
            if strict || !(8..=10).contains(&k) {
                gating += 1;
            }
        }
        println!("criterion {k:>2} {verdict} {name} ({:.1}s): {}", t.elapsed().as_secs_f64(), o.detail);
    }
    if !failed.is_empty() {
        println!("failed criteria: {failed:?}");
    }
    if gating > 0 {
        std::process::exit(1);
    }
}
