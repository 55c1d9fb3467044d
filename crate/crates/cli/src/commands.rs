use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use lfc_bench::{run_scaling, slopes, write_csv, Operator};
use lfc_core::landmark::{splat_heatmap, write_pgm, Landmark, DEFAULT_SIGMA_CELLS};
use lfc_core::net::{evaluate, train, EpochReport, Metrics, Network, Prediction};
use lfc_core::synthground::{gen_dataset, load_dataset, save_dataset, GroundingSample, Vocab, IMAGE_SIZE};
use lfc_core::tensor::{read_checkpoint, write_checkpoint, Graph, ParamSet};
use lfc_core::Error;

use crate::checks::{run_suite, Faults, SuiteConfig};
use crate::config::{FileConfig, RunConfig};
use crate::error::{CliError, Result};

pub const CHECKPOINT: &str = "checkpoint.lbyl";
pub const CONFIG: &str = "config.toml";
pub const METRICS: &str = "metrics.csv";
pub const EVAL: &str = "eval.csv";
pub const BENCH: &str = "bench.csv";

/// The test split is seeded separately so it never overlaps training.
pub fn split_seeds(seed: u64) -> (u64, u64) {
    (seed, seed ^ 0x7E57_5EED)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| CliError::io(path, e))
}

fn io_path(path: &Path) -> impl Fn(Error) -> CliError + '_ {
    move |e| match e {
        Error::Io(source) => CliError::io(path, source),
        other => CliError::Core(other),
    }
}

pub fn cmd_gen(cfg: &RunConfig) -> Result<()> {
    let (train_seed, test_seed) = split_seeds(cfg.seed);
    let t = &cfg.train;
    let root = cfg.dataset.clone().unwrap_or_else(|| cfg.output_dir.clone());
    for (name, n, seed) in [("train", t.train_size, train_seed), ("test", t.test_size, test_seed)] {
        let data = gen_dataset(n, seed, t.critical_fraction)?;
        let dir = root.join(name);
        save_dataset(&dir, &data).map_err(io_path(&dir))?;
        println!("wrote {} samples to {}", data.len(), dir.display());
    }
    Ok(())
}

/// Load a split from `--dataset`, or regenerate it from the seed.
pub fn load_split(cfg: &RunConfig, name: &str) -> Result<Vec<GroundingSample>> {
    if let Some(root) = &cfg.dataset {
        let dir = root.join(name);
        if !dir.is_dir() {
            return Err(CliError::io(&dir, std::io::Error::new(std::io::ErrorKind::NotFound, "no such split")));
        }
        return load_dataset(&dir).map_err(io_path(&dir));
    }
    let (train_seed, test_seed) = split_seeds(cfg.seed);
    let t = &cfg.train;
    Ok(match name {
        "train" => gen_dataset(t.train_size, train_seed, t.critical_fraction)?,
        _ => gen_dataset(t.test_size, test_seed, t.critical_fraction)?,
    })
}

fn metrics_row(w: &mut impl Write, epoch: usize, loss: f64, m: &Metrics) -> std::io::Result<()> {
    writeln!(w, "{epoch},{loss:.6},{:.6},{:.6},{:.6}", m.pr50, m.pr75, m.pr50_critical)
}

pub fn cmd_train(cfg: &RunConfig) -> Result<Vec<EpochReport>> {
    let train_set = load_split(cfg, "train")?;
    let test_set = load_split(cfg, "test")?;
    let mut params = ParamSet::<f32>::new(cfg.seed);
    let net = Network::new(cfg.model.clone(), &mut params)?;
    let cfg_path = cfg.output_dir.join(CONFIG);
    fs::write(&cfg_path, cfg.to_file().to_toml()).map_err(|e| CliError::io(&cfg_path, e))?;

    let metrics_path = cfg.output_dir.join(METRICS);
    let mut metrics = create(&metrics_path)?;
    let io = |e| CliError::io(&metrics_path, e);
    writeln!(metrics, "epoch,loss,pr50,pr75,pr50_critical").map_err(io)?;
    let mut write_err = None;
    let reports = train(&net, &mut params, &train_set, &test_set, &cfg.train, cfg.seed, |r| {
        match &r.metrics {
            Some(m) => {
                println!(
                    "epoch {:>3} loss {:.4} pr50 {:.4} pr75 {:.4} pr50_critical {:.4}",
                    r.epoch, r.loss, m.pr50, m.pr75, m.pr50_critical
                );
                if let Err(e) = metrics_row(&mut metrics, r.epoch, r.loss, m).and_then(|_| metrics.flush()) {
                    write_err.get_or_insert(e);
                }
            }
            None => println!("epoch {:>3} loss {:.4}", r.epoch, r.loss),
        }
    })?;
    if let Some(e) = write_err {
        return Err(io(e));
    }
    let ckpt = cfg.output_dir.join(CHECKPOINT);
    let mut w = create(&ckpt)?;
    write_checkpoint(&mut w, &params.to_named_f32()).map_err(io_path(&ckpt))?;
    w.flush().map_err(|e| CliError::io(&ckpt, e))?;
    println!("checkpoint written to {}", ckpt.display());
    Ok(reports)
}

/// Rebuild a trained network from a checkpoint and the `config.toml` beside it.
pub fn load_model(path: &Path) -> Result<(Network, ParamSet<f32>)> {
    let f = File::open(path).map_err(|e| CliError::io(path, e))?;
    let file = FileConfig::load(&path.with_file_name(CONFIG))?;
    let mut params = ParamSet::<f32>::new(0);
    let net = Network::new(file.model, &mut params)?;
    let named = read_checkpoint(&mut BufReader::new(f)).map_err(io_path(path))?;
    params.load_from(&named)?;
    Ok((net, params))
}

fn checkpoint_path(cfg: &RunConfig, given: Option<&PathBuf>) -> PathBuf {
    given.cloned().unwrap_or_else(|| cfg.output_dir.join(CHECKPOINT))
}

pub fn cmd_eval(cfg: &RunConfig, checkpoint: Option<&PathBuf>) -> Result<Metrics> {
    let (net, params) = load_model(&checkpoint_path(cfg, checkpoint))?;
    let test_set = load_split(cfg, "test")?;
    let m = evaluate(&net, &params, &test_set)?;
    println!(
        "samples {} pr50 {:.4} pr75 {:.4} critical {} pr50_critical {:.4}",
        m.samples, m.pr50, m.pr75, m.critical_samples, m.pr50_critical
    );
    let path = cfg.output_dir.join(EVAL);
    let mut w = create(&path)?;
    writeln!(w, "samples,pr50,pr75,critical_samples,pr50_critical")
        .and_then(|_| writeln!(w, "{},{:.6},{:.6},{},{:.6}", m.samples, m.pr50, m.pr75, m.critical_samples, m.pr50_critical))
        .and_then(|_| w.flush())
        .map_err(|e| CliError::io(&path, e))?;
    Ok(m)
}

pub fn cmd_check(inject_fault: Option<&str>) -> Result<()> {
    let faults = match inject_fault {
        None => Faults::default(),
        Some("dmp") => Faults { dmp: true },
        Some(other) => return Err(CliError::Usage(format!("unknown fault `{other}`"))),
    };
    let cfg = SuiteConfig { faults, ..SuiteConfig::default() };
    let outcomes = run_suite(&cfg, |o| println!("{o}"));
    let failed: Vec<String> = outcomes.iter().filter(|o| !o.passed()).map(|o| o.name.to_string()).collect();
    println!("{} checks, {} failed", outcomes.len(), failed.len());
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::CheckFailed { count: failed.len(), names: failed })
    }
}

pub fn cmd_bench(cfg: &RunConfig, sizes: &[usize], channels: usize, repeats: usize, parallel: bool) -> Result<()> {
    let mut ops = vec![Operator::Lfc, Operator::Attention, Operator::Pointwise, Operator::Dilated];
    if parallel {
        ops.insert(1, Operator::LfcParallel);
    }
    let records = run_scaling(&ops, sizes, channels, repeats, cfg.seed)?;
    let path = cfg.output_dir.join(BENCH);
    write_csv(create(&path)?, &records).map_err(|e| match e {
        lfc_bench::BenchError::Io(source) => CliError::io(&path, source),
        other => CliError::Bench(other),
    })?;
    write_csv(std::io::stdout().lock(), &records)?;
    if sizes.len() >= 3 {
        for op in ops {
            let s = slopes(&records, op)?;
            println!("# {op}: time slope {:.3}, memory slope {:.3}", s.time, s.memory);
        }
    }
    Ok(())
}

/// Everything `visualize` writes for one sample.
#[derive(Clone, Debug)]
pub struct Visualization {
    pub prediction: Prediction,
    /// Fused-map cell holding the predicted box centre.
    pub node: (usize, usize),
    /// Pixel stride of the fused map.
    pub stride: usize,
    pub landmarks: Vec<Landmark>,
    pub heatmap: lfc_core::Tensor<f64>,
}

/// Landmarks of the predicted box's centre cell and their Gaussian heatmap.
pub fn visualize_sample(net: &Network, params: &ParamSet<f32>, sample: &GroundingSample) -> Result<Visualization> {
    let mut g = Graph::new();
    let p = params.bind_frozen(&mut g);
    let image = g.constant(sample.image.clone());
    let ids = Vocab::default().encode_ids(&sample.expression)?;
    let fwd = net.forward(&mut g, &p, image, &ids, true)?;
    let store = fwd.landmarks.ok_or_else(|| {
        Error::Contract(format!("head `{}` has no landmarks to visualize", net.config.head))
    })?;
    let outs: Vec<_> = fwd.outputs.iter().map(|&o| g.value(o)).collect();
    let prediction = net.predict(&outs)?;
    let (_, h, w) = g.value(fwd.fused).chw()?;
    let stride = IMAGE_SIZE / h;
    let (cx, cy) = prediction.bbox.center();
    let node = (
        ((cy / stride as f64) as usize).min(h - 1),
        ((cx / stride as f64) as usize).min(w - 1),
    );
    let landmarks = store.decode(node)?;
    let heatmap = splat_heatmap(&landmarks, IMAGE_SIZE, IMAGE_SIZE, stride, DEFAULT_SIGMA_CELLS)?;
    Ok(Visualization { prediction, node, stride, landmarks, heatmap })
}

pub fn cmd_visualize(cfg: &RunConfig, checkpoint: Option<&PathBuf>, sample_id: usize) -> Result<Visualization> {
    let (net, params) = load_model(&checkpoint_path(cfg, checkpoint))?;
    let test_set = load_split(cfg, "test")?;
    let sample = test_set
        .iter()
        .find(|s| s.id == sample_id)
        .ok_or_else(|| CliError::Usage(format!("no test sample with id {sample_id}")))?;
    let v = visualize_sample(&net, &params, sample)?;

    let pgm = cfg.output_dir.join(format!("heatmap_{sample_id}.pgm"));
    let mut w = create(&pgm)?;
    write_pgm(&mut w, &v.heatmap).map_err(io_path(&pgm))?;
    w.flush().map_err(|e| CliError::io(&pgm, e))?;

    let lm = cfg.output_dir.join(format!("landmarks_{sample_id}.csv"));
    let mut w = create(&lm)?;
    let half = v.stride as f64 / 2.0;
    let mut text = String::from("group,channel,row,col,x,y\n");
    for l in &v.landmarks {
        let (x, y) = (l.col as f64 * v.stride as f64 + half, l.row as f64 * v.stride as f64 + half);
        text.push_str(&format!("{},{},{},{},{x},{y}\n", l.group, l.channel, l.row, l.col));
    }
    w.write_all(text.as_bytes()).and_then(|_| w.flush()).map_err(|e| CliError::io(&lm, e))?;

    let bx = cfg.output_dir.join(format!("boxes_{sample_id}.csv"));
    let mut w = create(&bx)?;
    let (p, t) = (v.prediction.bbox, sample.target);
    let text = format!(
        "kind,x_min,y_min,x_max,y_max,score\npredicted,{},{},{},{},{}\nground_truth,{},{},{},{},\n",
        p.x_min, p.y_min, p.x_max, p.y_max, v.prediction.score, t.x_min, t.y_min, t.x_max, t.y_max
    );
    w.write_all(text.as_bytes()).and_then(|_| w.flush()).map_err(|e| CliError::io(&bx, e))?;
    println!(
        "sample {sample_id} \"{}\": {} landmarks at cell {:?}, IoU {:.3}; wrote {}",
        sample.expression,
        v.landmarks.len(),
        v.node,
        p.iou(&t),
        pgm.display()
    );
    Ok(v)
}

/// Fraction of relation-critical samples for which at least one landmark of
/// the predicted centre cell lands on a referent: the landmark's cell overlaps
/// the referent's box.
pub fn landmark_referent_rate(net: &Network, params: &ParamSet<f32>, samples: &[GroundingSample]) -> Result<f64> {
    let mut hits = 0usize;
    let mut total = 0usize;
    for s in samples.iter().filter(|s| s.relation_critical) {
        let v = visualize_sample(net, params, s)?;
        let st = v.stride as f64;
        let hit = v.landmarks.iter().any(|l| {
            let cell = lfc_core::synthground::BBox::new(l.col as f64 * st, l.row as f64 * st, (l.col + 1) as f64 * st, (l.row + 1) as f64 * st);
            s.referents().any(|r| cell.intersection(&r.bbox) > 0.0)
        });
        hits += usize::from(hit);
        total += 1;
    }
    Ok(if total == 0 { 0.0 } else { hits as f64 / total as f64 })
}
