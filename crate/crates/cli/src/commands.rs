use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::{self, BufWriter};
use std::net::TcpListener;
use std::path::Path;

use anyhow::{bail, Context, Result};
use dexretarget::io::{load_states, save_states_named, save_trajectory};
use dexretarget::metrics::{
    all_fingers, closest_pinch_finger, metric_rows, pinch_pair, read_metrics_csv, write_combined_table,
    write_metrics_csv, MetricRow,
};
use dexretarget::solver::{default_start, retarget_trajectory};
use dexretarget::stream::{run_stream, StreamConfig};
use dexretarget::{
    gen_synthetic, preset, run_preset, save_report, HandMorphParams, HumanHandFrame, PresetId,
    SyntheticKind,
};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use crate::options::{read_trajectory, trajectory_name, ProtocolKind};
use crate::output::{manifest_path, Outputs, RunManifest};
use crate::{AblateArgs, EvaluateArgs, GenArgs, ProfileArgs, RetargetArgs, SelectionArgs, StreamArgs};

fn parse_preset(name: &str) -> Result<PresetId> {
    Ok(name.parse()?)
}

fn selection(args: &SelectionArgs, frames: &[HumanHandFrame]) -> Result<BTreeSet<usize>> {
    let n = frames.first().map_or(0, |f| f.finger_count());
    if !args.pinch_pair_only {
        return Ok(all_fingers(n));
    }
    let finger = match args.pinch_finger {
        Some(f) => f,
        None => closest_pinch_finger(frames).context("no primary finger to pair with the thumb")?,
    };
    if finger == 0 || finger >= n {
        bail!("pinch finger {finger} is not a primary finger of a {n}-finger hand");
    }
    Ok(pinch_pair(finger))
}

fn write_csv(outputs: &mut Outputs, path: &Path, rows: &[MetricRow]) -> Result<()> {
    let path = outputs.file(path);
    write_metrics_csv(fs::File::create(&path).with_context(|| format!("creating {}", path.display()))?, rows)?;
    let back = read_metrics_csv(fs::File::open(&path)?)?;
    if back.len() != rows.len() {
        bail!("{} did not read back", path.display());
    }
    Ok(())
}

pub fn gen(a: GenArgs) -> Result<()> {
    let kind: SyntheticKind = a.kind.parse()?;
    let morphology = match &a.morphology {
        Some(p) => serde_json::from_str::<HandMorphParams>(&fs::read_to_string(p)?)
            .with_context(|| format!("parsing morphology {}", p.display()))?,
        None => match a.fingers {
            4 => HandMorphParams::four_finger(),
            5 => HandMorphParams::five_finger(),
            n => bail!("--fingers must be 4 or 5, got {n}"),
        },
    }
    .with_mismatch(a.mismatch);
    let frames = gen_synthetic(kind, a.duration, a.rate, &morphology, a.seed)?;

    let mut outputs = Outputs::default();
    save_trajectory(&outputs.file(&a.out), &frames, a.rate)?;
    dexretarget::load_trajectory(&a.out)?;
    let config = json!({
        "kind": kind, "duration": a.duration, "rate": a.rate, "seed": a.seed, "morphology": morphology,
    });
    outputs.commit(manifest_path(&a.out), RunManifest::new("gen", &config)?)?;
    eprintln!("wrote {} frames to {}", frames.len(), a.out.display());
    Ok(())
}

pub fn retarget(a: RetargetArgs) -> Result<()> {
    let loaded = a.chain.load()?;
    let traj = read_trajectory(&a.trajectory, &loaded.chain)?;
    let resolved = a.tunables.resolve(loaded.profile, ProtocolKind::Online)?;
    let id = parse_preset(&a.preset)?;
    let cfg = preset(id, &resolved.base);
    let q0 = dexretarget::ablation::start_state(&loaded.chain, &traj.frames, &cfg, &resolved.protocol)?;
    let (states, reports) = retarget_trajectory(&loaded.chain, &traj.frames, &cfg, &q0, &resolved.protocol.settings)?;

    let mut outputs = Outputs::default();
    save_states_named(&outputs.file(&a.out), &states, &loaded.chain.actuated_names())?;
    load_states(&a.out)?;
    let manifest = RunManifest::new("retarget", &json!({ "preset": id.name(), "resolved": resolved, "objective": cfg }))?
        .input("chain", &a.chain.chain)
        .input("trajectory", &a.trajectory);
    outputs.commit(manifest_path(&a.out), manifest)?;
    let mean = reports.iter().map(|r| r.solve_time).sum::<f64>() / reports.len() as f64;
    eprintln!("retargeted {} frames, mean solve {:.2} ms", states.len(), mean * 1e3);
    Ok(())
}

pub fn evaluate(a: EvaluateArgs) -> Result<()> {
    let loaded = a.chain.load()?;
    let traj = read_trajectory(&a.trajectory, &loaded.chain)?;
    let states = load_states(&a.states).with_context(|| format!("loading states {}", a.states.display()))?;
    let resolved = a.tunables.resolve(loaded.profile, ProtocolKind::Online)?;
    let id = parse_preset(&a.preset)?;
    let cfg = preset(id, &resolved.base);
    let sel = selection(&a.selection, &traj.frames)?;
    let report = dexretarget::evaluate(&loaded.chain, &traj.frames, &states, &cfg, &sel)?;

    let mut outputs = Outputs::default();
    let rows = metric_rows(id.name(), &trajectory_name(&a.trajectory), &report);
    write_csv(&mut outputs, &a.out, &rows)?;
    if let Some(p) = &a.report {
        save_report(&outputs.file(p), &report)?;
        dexretarget::io::load_report(p)?;
    }
    let manifest = RunManifest::new("evaluate", &json!({ "preset": id.name(), "objective": cfg, "finger_selection": sel }))?
        .input("chain", &a.chain.chain)
        .input("trajectory", &a.trajectory)
        .input("states", &a.states);
    outputs.commit(manifest_path(&a.out), manifest)?;
    for r in &rows {
        println!("{:<28} {:>12.6} {}", r.metric, r.value, r.unit);
    }
    Ok(())
}

pub fn ablate(a: AblateArgs) -> Result<()> {
    let loaded = a.chain.load()?;
    let traj = read_trajectory(&a.trajectory, &loaded.chain)?;
    let resolved = a.tunables.resolve(loaded.profile, ProtocolKind::Offline)?;
    let ids = a.presets.iter().map(|p| parse_preset(p)).collect::<Result<Vec<_>>>()?;
    let sel = selection(&a.selection, &traj.frames)?;
    let name = trajectory_name(&a.trajectory);

    let pool = rayon::ThreadPoolBuilder::new().num_threads(a.jobs.unwrap_or(0)).build()?;
    let runs = pool.install(|| {
        ids.par_iter()
            .map(|&id| run_preset(&loaded.chain, &traj.frames, &resolved.base, id, &resolved.protocol, &sel))
            .collect::<Result<Vec<_>, _>>()
    })?;

    let mut outputs = Outputs::default();
    outputs.dir(&a.out_dir)?;
    let mut all_rows = Vec::new();
    for run in &runs {
        let rows = metric_rows(run.preset.name(), &name, &run.metrics);
        write_csv(&mut outputs, &a.out_dir.join(format!("{}.csv", run.preset.name())), &rows)?;
        if a.save_states {
            let path = outputs.file(a.out_dir.join(format!("{}.states.jsonl", run.preset.name())));
            save_states_named(&path, &run.states, &loaded.chain.actuated_names())?;
        }
        all_rows.extend(rows);
    }
    let combined = outputs.file(a.out_dir.join("combined.csv"));
    write_combined_table(fs::File::create(&combined)?, &all_rows)?;

    let objectives: BTreeMap<&str, _> = ids.iter().map(|id| (id.name(), preset(*id, &resolved.base))).collect();
    let manifest = RunManifest::new(
        "ablate",
        &json!({ "resolved": resolved, "presets": objectives, "finger_selection": sel, "trajectory_name": name }),
    )?
    .input("chain", &a.chain.chain)
    .input("trajectory", &a.trajectory);
    outputs.commit(a.out_dir.join("manifest.json"), manifest)?;
    print!("{}", fs::read_to_string(&combined)?);
    Ok(())
}

#[derive(Debug, Serialize)]
struct ProfileStats {
    frames: usize,
    repetitions: usize,
    dof: usize,
    mean_solve_time_s: f64,
    median_solve_time_s: f64,
    max_solve_time_s: f64,
    mean_iterations: f64,
    budget_s: f64,
    budget_exceed_fraction: f64,
}

pub fn profile(a: ProfileArgs) -> Result<()> {
    if a.repetitions == 0 {
        bail!("--repetitions must be at least 1");
    }
    let loaded = a.chain.load()?;
    let traj = read_trajectory(&a.trajectory, &loaded.chain)?;
    let resolved = a.tunables.resolve(loaded.profile, ProtocolKind::Online)?;
    let cfg = preset(parse_preset(&a.preset)?, &resolved.base);
    let q0 = dexretarget::ablation::start_state(&loaded.chain, &traj.frames, &cfg, &resolved.protocol)?;
    let mut times = Vec::new();
    let mut iterations = 0usize;
    for _ in 0..a.repetitions {
        let (_, reports) = retarget_trajectory(&loaded.chain, &traj.frames, &cfg, &q0, &resolved.protocol.settings)?;
        times.extend(reports.iter().map(|r| r.solve_time));
        iterations += reports.iter().map(|r| r.iterations).sum::<usize>();
    }
    let budget = 1.0 / a.rate.unwrap_or(traj.header.rate_hz);
    let n = times.len() as f64;
    let mut sorted = times.clone();
    sorted.sort_by(f64::total_cmp);
    let stats = ProfileStats {
        frames: traj.frames.len(),
        repetitions: a.repetitions,
        dof: loaded.chain.actuated_count(),
        mean_solve_time_s: times.iter().sum::<f64>() / n,
        median_solve_time_s: sorted[sorted.len() / 2],
        max_solve_time_s: sorted[sorted.len() - 1],
        mean_iterations: iterations as f64 / n,
        budget_s: budget,
        budget_exceed_fraction: times.iter().filter(|t| **t > budget).count() as f64 / n,
    };
    let mut outputs = Outputs::default();
    if let Some(p) = &a.out {
        outputs.write_json(p, &stats)?;
        let manifest = RunManifest::new("profile", &json!({ "preset": a.preset, "resolved": resolved }))?
            .input("chain", &a.chain.chain)
            .input("trajectory", &a.trajectory);
        outputs.commit(manifest_path(p), manifest)?;
    }
    println!("{}", serde_json::to_string_pretty(&stats)?);
    Ok(())
}

pub fn stream(a: StreamArgs) -> Result<()> {
    let loaded = a.chain.load()?;
    let resolved = a.tunables.resolve(loaded.profile, ProtocolKind::Online)?;
    let cfg = preset(parse_preset(&a.preset)?, &resolved.base);
    let q0 = default_start(&loaded.chain, &cfg);
    let config = StreamConfig {
        loop_rate: a.rate,
        command_rate: a.command_rate,
        paced: a.paced,
        solver: resolved.protocol.settings,
    };
    let run = match &a.tcp {
        Some(addr) => {
            let listener = TcpListener::bind(addr).with_context(|| format!("binding {addr}"))?;
            eprintln!("listening on {}", listener.local_addr()?);
            let (socket, peer) = listener.accept()?;
            eprintln!("connected to {peer}");
            let reader = socket.try_clone()?;
            run_stream(reader, BufWriter::new(socket), &loaded.chain, &cfg, &q0, &config)?
        }
        None => run_stream(io::stdin(), BufWriter::new(io::stdout().lock()), &loaded.chain, &cfg, &q0, &config)?,
    };
    let text = serde_json::to_string_pretty(&run.stats)?;
    match &a.stats {
        Some(p) => {
            let mut outputs = Outputs::default();
            outputs.write_json(p, &run.stats)?;
            let manifest = RunManifest::new("stream", &json!({ "preset": a.preset, "stream": config, "objective": cfg }))?
                .input("chain", &a.chain.chain);
            outputs.commit(manifest_path(p), manifest)?;
        }
        None => eprintln!("{text}"),
    }
    Ok(())
}
