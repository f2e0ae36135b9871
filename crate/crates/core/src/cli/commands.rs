use std::fs;
use std::path::Path;
use std::time::Instant;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use beamswitch::experiments::{
    evaluate_localization, parity, pattern_table, run_baseline, run_imaging, run_mobility, simulate as run_simulation, tradeoff_sweep,
    write_pgm, BaselineMode,
};
use beamswitch::optimizer::{build_codebook, update_codebook, user_snrs, Codebook, SensingTarget};
use beamswitch::sensing::{solve_opt_delay, solve_opt_delay_recompute, write_features_csv, DelaySearchConfig};
use beamswitch::units::{db_to_lin, lin_to_db};
use beamswitch::waveform::{write_iq, IqHeader, PredistortionPlan, SubSymbolSchedule};
use beamswitch::{ArrayGeometry, Direction, Error, Execution, Result};

use super::{RunConfig, RunDir};

fn db(v: f64) -> String {
    if v.is_infinite() && v > 0.0 {
        return "inf".into();
    }
    if v > 0.0 {
        format!("{:.4}", lin_to_db(v))
    } else {
        "-inf".into()
    }
}

fn f4(v: f64) -> String {
    format!("{v:.4}")
}

fn gains_table(cb: &Codebook, geometry: &ArrayGeometry) -> Result<Vec<Vec<String>>> {
    let mut rows = Vec::with_capacity(cb.len());
    for (i, e) in cb.entries.iter().enumerate() {
        let mut row = vec![
            i.to_string(),
            f4(e.sensing.azimuth.to_degrees()),
            e.sensing.elevation.map_or(String::new(), |v| f4(v.to_degrees())),
            db(e.weights.gain(geometry, e.sensing)?),
            db(e.gamma_min),
            e.converged.to_string(),
            e.conjugate_fallback.to_string(),
        ];
        row.extend(user_snrs(&e.weights, geometry, &cb.users)?.into_iter().map(db));
        rows.push(row);
    }
    Ok(rows)
}

fn write_gains(dir: &mut RunDir, name: &str, cb: &Codebook, geometry: &ArrayGeometry) -> Result<()> {
    let mut w = dir.csv(name)?;
    let mut header: Vec<String> =
        ["entry", "sensing_az_deg", "sensing_el_deg", "sensing_gain_db", "gamma_min_db", "converged", "conjugate_fallback"]
            .map(String::from)
            .to_vec();
    header.extend((0..cb.users.len()).map(|u| format!("user{u}_snr_db")));
    w.write_record(&header)?;
    let rows = gains_table(cb, geometry)?;
    for r in &rows {
        w.write_record(r)?;
    }
    w.flush()?;
    println!("{}", header.join("\t"));
    for r in rows {
        println!("{}", r.join("\t"));
    }
    Ok(())
}

pub fn codebook(cfg: &RunConfig, input: Option<&Path>, dir: &mut RunDir, exec: Execution) -> Result<()> {
    let geometry = cfg.array.geometry()?;
    let users = cfg.users()?;
    let cb = match input {
        Some(p) => Codebook::from_json(&fs::read_to_string(p)?, users)?,
        None => build_codebook(
            &users,
            &cfg.codebook.sweep.directions(),
            db_to_lin(cfg.codebook.sensing_base_snr_db),
            &geometry,
            &cfg.optimizer,
            exec,
        )?,
    };
    dir.write("codebook.json", cb.to_json()?)?;
    write_gains(dir, "gains.csv", &cb, &geometry)?;
    if let Some(moved) = cfg.moved_users()? {
        let (next, stats) = update_codebook(&cb, &moved, &geometry, &cfg.optimizer, exec)?;
        dir.write("codebook_updated.json", next.to_json()?)?;
        let mut w = dir.csv("update.csv")?;
        w.write_record(["entry", "reoptimized", "gamma_min_before_db", "gamma_min_predicted_db", "gamma_min_after_db"])?;
        for e in &stats.entries {
            w.write_record([
                e.index.to_string(),
                e.reoptimized.to_string(),
                db(e.gamma_min_before),
                db(e.gamma_min_predicted),
                db(e.gamma_min_after),
            ])?;
        }
        w.flush()?;
        println!(
            "update: {} reused, {} re-optimized, solver time {:.3} ms",
            stats.reused,
            stats.reoptimized,
            stats.total_solve_time().as_secs_f64() * 1e3
        );
        write_gains(dir, "gains_updated.csv", &next, &geometry)?;
    }
    Ok(())
}

pub fn pattern(cfg: &RunConfig, dir: &mut RunDir, exec: Execution) -> Result<()> {
    let geometry = cfg.array.geometry()?;
    let users = cfg.users()?;
    let sweep = cfg.codebook.sweep.directions();
    let cb = build_codebook(&users, &sweep, db_to_lin(cfg.codebook.sensing_base_snr_db), &geometry, &cfg.optimizer, exec)?;
    let table = pattern_table(&geometry, &cb.beams(), &cfg.pattern.angles())?;
    let mut w = dir.csv("pattern.csv")?;
    let mut header = vec!["angle_deg".to_string()];
    header.extend(sweep.iter().enumerate().map(|(i, d)| format!("beam{i}_{:.2}deg_db", d.azimuth.to_degrees())));
    w.write_record(&header)?;
    for row in table {
        let mut rec = vec![f4(row[0])];
        rec.extend(row[1..].iter().map(|g| db(*g)));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn tradeoff(cfg: &RunConfig, dir: &mut RunDir, exec: Execution) -> Result<()> {
    let geometry = cfg.array.geometry()?;
    let users = cfg.users()?;
    let t = &cfg.tradeoff;
    let target = SensingTarget::new(
        Direction::from_degrees(t.sensing_azimuth_deg, None).fit_to(&geometry),
        db_to_lin(t.sensing_base_snr_db),
    );
    let pts = tradeoff_sweep(&users, &target, &geometry, &cfg.optimizer, &t.epsilons, exec)?;
    let mut w = dir.csv("tradeoff.csv")?;
    let mut header = vec!["epsilon".to_string(), "sensing_snr_db".into(), "gamma_min_db".into()];
    header.extend((0..users.len()).map(|u| format!("user{u}_snr_db")));
    w.write_record(&header)?;
    for p in &pts {
        let mut rec = vec![format!("{:.4}", p.epsilon), f4(p.sensing_gain_db), f4(p.gamma_min_db)];
        rec.extend(p.user_snr_db.iter().map(|v| f4(*v)));
        w.write_record(&rec)?;
    }
    w.flush()?;
    let cross = pts.windows(2).find(|w| {
        (w[0].sensing_gain_db - w[0].gamma_min_db) >= 0.0 && (w[1].sensing_gain_db - w[1].gamma_min_db) < 0.0
    });
    match cross {
        Some(w) => println!("crossover between epsilon {} and {}", w[0].epsilon, w[1].epsilon),
        None => println!("no crossover in the swept range"),
    }
    if t.parity && !users.is_empty() {
        let r = parity(&users, &target, &geometry, &cfg.optimizer)?;
        let mut w = dir.csv("parity.csv")?;
        w.write_record(["target", "angle_deg", "opt_base_db", "opt_accel_db", "diff_db"])?;
        for row in &r.rows {
            w.write_record([row.label.clone(), f4(row.angle_deg), f4(row.base_db), f4(row.accel_db), f4(row.diff_db())])?;
        }
        w.flush()?;
        println!("OPT-Base vs OPT-Accel: max difference {:.3} dB", r.max_diff_db());
    }
    Ok(())
}

pub fn simulate(cfg: &RunConfig, dir: &mut RunDir, exec: Execution) -> Result<()> {
    let geometry = cfg.array.geometry()?;
    let link = cfg.link_config();
    let scene = cfg.scene.resolve(link.numerology.sample_rate)?;
    let r = simulate_and_report(&scene, &geometry, &link, cfg.seed, exec, dir)?;
    if cfg.link.export_iq {
        let header = IqHeader::for_slot(&link.numerology, r.tx_samples.len());
        let p = dir.path("tx.iq");
        write_iq(std::io::BufWriter::new(fs::File::create(p)?), &header, &r.tx_samples)?;
    }
    if cfg.link.baselines && !scene.users.is_empty() {
        let mut w = dir.csv("baselines.csv")?;
        w.write_record(["mode", "user", "evm_percent", "ber", "beam_switches_per_dmrs"])?;
        let mut s = dir.csv("baseline_sensing.csv")?;
        s.write_record(["mode", "angle_deg", "delay_star", "mean_power_db", "normalized_power_db", "linearity_loss"])?;
        for mode in BaselineMode::ALL {
            let b = run_baseline(mode, &scene, &geometry, &link, cfg.seed, exec)?;
            for u in &b.users {
                w.write_record([
                    mode.name().to_string(),
                    u.index.to_string(),
                    f4(u.evm_estimated),
                    format!("{:.6}", u.ber_estimated),
                    b.beam_switches_per_dmrs.to_string(),
                ])?;
            }
            for x in &b.sensing {
                s.write_record([
                    mode.name().to_string(),
                    f4(x.angle_deg),
                    x.delay_star.to_string(),
                    f4(x.mean_power_db),
                    f4(x.normalized_power_db),
                    format!("{:.9}", x.linearity_loss),
                ])?;
            }
        }
        w.flush()?;
        s.flush()?;
    }
    Ok(())
}

fn simulate_and_report(
    scene: &beamswitch::channel::Scene,
    geometry: &ArrayGeometry,
    link: &beamswitch::experiments::LinkConfig,
    seed: u64,
    exec: Execution,
    dir: &mut RunDir,
) -> Result<beamswitch::experiments::SimulationReport> {
    let r = run_simulation(scene, geometry, link, seed, exec)?;
    let mut w = dir.csv("link.csv")?;
    w.write_record(["user", "azimuth_deg", "data_gain_db", "evm_estimated_percent", "ber_estimated", "evm_genie_percent", "ber_genie"])?;
    for u in &r.users {
        w.write_record([
            u.index.to_string(),
            f4(u.azimuth_deg),
            f4(u.data_gain_db),
            f4(u.evm_estimated),
            format!("{:.6}", u.ber_estimated),
            f4(u.evm_genie),
            format!("{:.6}", u.ber_genie),
        ])?;
        println!("user {}: EVM {:.3}% (genie {:.3}%)", u.index, u.evm_estimated, u.evm_genie);
    }
    w.flush()?;
    let rows: Vec<(f64, &beamswitch::sensing::SensingCsi)> = r.sensing_angles_deg.iter().copied().zip(&r.sensing).collect();
    write_features_csv(fs::File::create(dir.path("sensing.csv"))?, &rows)?;
    let mut p = dir.csv("predistortion.csv")?;
    p.write_record(["beam", "factor"])?;
    for (m, f) in r.predistortion.factors.iter().enumerate() {
        p.write_record([m.to_string(), format!("{f:.9}")])?;
    }
    p.flush()?;
    Ok(r)
}

pub fn image(cfg: &RunConfig, dir: &mut RunDir, exec: Execution) -> Result<()> {
    let im = &cfg.imaging;
    let geometry = im.array.geometry()?;
    let scene = im.scene.resolve(im.grid.numerology.sample_rate)?;
    let start = Instant::now();
    let grid = run_imaging(&scene, &geometry, &im.grid, cfg.seed, exec)?;
    grid.write_csv(fs::File::create(dir.path("heatmap.csv"))?)?;
    write_pgm(std::io::BufWriter::new(fs::File::create(dir.path("heatmap.pgm"))?), &grid)?;
    dir.json("airtime.json", &grid.air_time)?;
    let t = &grid.air_time;
    println!(
        "{} directions: {} slots ({:.3} ms whole slots, {:.3} ms counting DMRS symbols used), {:.2} DMRS symbols",
        t.directions,
        t.slots,
        t.slot_time_s * 1e3,
        t.dmrs_time_s * 1e3,
        t.dmrs_symbols_fractional
    );
    for (e, a, v) in grid.local_maxima().into_iter().take(3) {
        println!("local maximum at az {} el {}: {:.2} dB", grid.az_angles_deg[a], grid.el_angles_deg[e], v);
    }
    println!("wall time {:.2} s", start.elapsed().as_secs_f64());
    Ok(())
}

pub fn localize(cfg: &RunConfig, dir: &mut RunDir, exec: Execution) -> Result<()> {
    let start = Instant::now();
    let r = evaluate_localization(&cfg.localization, cfg.seed, exec)?;
    for (name, rows) in [("distance.csv", &r.distance), ("angle.csv", &r.angle)] {
        let mut w = dir.csv(name)?;
        w.write_record(["truth", "predicted", "abs_error"])?;
        for (t, p) in rows {
            w.write_record([f4(*t), f4(*p), f4((t - p).abs())])?;
        }
        w.flush()?;
    }
    dir.json("sp_weights.json", &r.weights)?;
    #[derive(serde::Serialize)]
    struct Summary {
        median_distance_error_m: f64,
        median_angle_error_deg: f64,
        distance_test_runs: usize,
        angle_test_runs: usize,
    }
    let s = Summary {
        median_distance_error_m: r.median_distance_error_m,
        median_angle_error_deg: r.median_angle_error_deg,
        distance_test_runs: r.distance.len(),
        angle_test_runs: r.angle.len(),
    };
    dir.json("summary.json", &s)?;
    println!(
        "median distance error {:.3} m, median angle error {:.3} deg (wall time {:.1} s)",
        s.median_distance_error_m,
        s.median_angle_error_deg,
        start.elapsed().as_secs_f64()
    );
    Ok(())
}

pub fn mobility(cfg: &RunConfig, dir: &mut RunDir, exec: Execution) -> Result<()> {
    let r = run_mobility(&cfg.mobility, cfg.seed, exec)?;
    let mut w = dir.csv("mobility.csv")?;
    w.write_record(["tick", "time_s", "moving_angle_deg", "reoptimized", "gamma_min_db", "gamma_min_actual_db", "sensing_gain_db"])?;
    for t in &r.ticks {
        w.write_record([
            t.tick.to_string(),
            format!("{:.3}", t.time_s),
            f4(t.moving_angle_deg),
            t.reoptimized.to_string(),
            f4(t.gamma_min_db),
            f4(t.gamma_min_actual_db),
            f4(t.sensing_gain_db),
        ])?;
    }
    w.flush()?;
    let mut s = dir.csv("soundness.csv")?;
    s.write_record(["tick", "entry", "reused", "stored_gamma_db", "fresh_gamma_db", "consistent"])?;
    for c in &r.soundness {
        s.write_record([
            c.tick.to_string(),
            c.entry.to_string(),
            c.reused.to_string(),
            f4(c.stored_gamma_db),
            f4(c.fresh_gamma_db),
            c.consistent.to_string(),
        ])?;
    }
    s.flush()?;
    dir.json("stats.json", &r)?;
    let total: f64 = r.update_times.iter().map(|d| d.as_secs_f64()).sum();
    let worst = r.update_times.iter().map(|d| d.as_secs_f64()).fold(0.0, f64::max);
    println!(
        "{} of {} ticks re-optimized ({:.1}%), sensing gain {:.2}..{:.2} dB, soundness {}/{}",
        r.reoptimized_ticks,
        r.ticks.len(),
        100.0 * r.reoptimized_fraction,
        r.sensing_min_db,
        r.sensing_max_db,
        r.soundness.iter().filter(|c| c.consistent).count(),
        r.soundness.len()
    );
    println!(
        "update wall time: mean {:.3} ms, max {:.3} ms",
        1e3 * total / r.update_times.len().max(1) as f64,
        1e3 * worst
    );
    Ok(())
}

fn random(n: usize, rng: &mut ChaCha8Rng) -> Vec<Complex64> {
    (0..n).map(|_| Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)).collect()
}

/// Operation counts go to the CSV; latencies are machine-dependent and only
/// printed.
pub fn bench(cfg: &RunConfig, dir: &mut RunDir) -> Result<()> {
    let b = &cfg.bench;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut w = dir.csv("opcounts.csv")?;
    w.write_record(["sub_len", "candidates", "sliding_multiply_adds", "recompute_multiply_adds", "ratio"])?;
    println!("sub_len\tcandidates\tsliding_us\trecompute_us");
    for &n in &b.sub_lens {
        for &c in &b.candidates {
            let sched = SubSymbolSchedule::new(n, 1)?;
            let tx = random(n, &mut rng);
            let rx = random(n + c, &mut rng);
            let plan = PredistortionPlan::identity(1);
            let dc = DelaySearchConfig { num_candidates: c, ..Default::default() };
            let fast = solve_opt_delay(&rx, &tx, &sched, 0, &plan, &dc)?;
            let slow = solve_opt_delay_recompute(&rx, &tx, &sched, 0, &plan, &dc)?;
            if fast.delay_star != slow.delay_star {
                return Err(Error::Parameter(format!("sliding and recompute paths disagree at n={n}, c={c}")));
            }
            w.write_record([
                n.to_string(),
                c.to_string(),
                fast.multiply_adds.to_string(),
                slow.multiply_adds.to_string(),
                format!("{:.4}", slow.multiply_adds as f64 / fast.multiply_adds as f64),
            ])?;
            let reps = b.repetitions.max(1);
            let t0 = Instant::now();
            for _ in 0..reps {
                std::hint::black_box(solve_opt_delay(&rx, &tx, &sched, 0, &plan, &dc)?);
            }
            let t1 = Instant::now();
            for _ in 0..reps {
                std::hint::black_box(solve_opt_delay_recompute(&rx, &tx, &sched, 0, &plan, &dc)?);
            }
            let t2 = Instant::now();
            println!(
                "{n}\t{c}\t{:.2}\t{:.2}",
                (t1 - t0).as_secs_f64() * 1e6 / reps as f64,
                (t2 - t1).as_secs_f64() * 1e6 / reps as f64
            );
        }
    }
    w.flush()?;
    Ok(())
}
