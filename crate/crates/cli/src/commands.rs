use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};

use isc_core::baselines::{ga_accuracy, GaConfig};
use isc_core::channel::{per_sweep, write_sweep_csv, ChannelConfig, RecoveryMode};
use isc_core::embedding::{train_transe, TransEConfig};
use isc_core::gaml::{evaluate_accuracy, train, MetricTrace, RoundMetrics, TrainConfig};
use isc_core::kg::{load_triples, partition_skgs, sample_expert_paths};
use isc_core::rng::substream;
use isc_core::synth::{generate, SynthConfig};
use isc_core::{DenseNet64, EmbeddingTable64, KnowledgeBase, PathSet, PathSource, PolicyModel64, TrainOutcome64};

use crate::config::Settings;

// independent seed streams per stage
const KB_STREAM: u64 = 0;
const EMBED_STREAM: u64 = 1;
const EXPERT_STREAM: u64 = 2;
const TRAIN_STREAM: u64 = 3;
const EVAL_STREAM: u64 = 4;
const CHANNEL_STREAM: u64 = 5;

fn create(path: &Path) -> Result<BufWriter<File>> {
    let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(f))
}

fn finish(mut w: BufWriter<File>, path: &Path) -> Result<()> {
    w.flush().with_context(|| format!("writing {}", path.display()))?;
    println!("wrote {}", path.display());
    Ok(())
}

fn knowledge_base(s: &Settings) -> Result<KnowledgeBase> {
    if let Some(path) = s.path("kb") {
        return Ok(load_triples(&path)?);
    }
    let cfg = SynthConfig::new(
        s.get("synth-entities")?,
        s.get("synth-relations")?,
        s.get("synth-density")?,
        substream(s.seed, KB_STREAM),
    );
    Ok(generate(&cfg)?)
}

fn embeddings(s: &Settings, kb: &KnowledgeBase) -> Result<EmbeddingTable64> {
    let tab = match s.path("embeddings") {
        Some(path) => {
            let f = File::open(&path).with_context(|| format!("opening {}", path.display()))?;
            EmbeddingTable64::read_csv(f).with_context(|| format!("reading {}", path.display()))?
        }
        None => {
            let cfg = TransEConfig {
                dim: s.get("dim")?,
                margin: s.get("margin")?,
                learning_rate: s.get("transe-lr")?,
                epochs: s.get("transe-epochs")?,
                negatives: 1,
                seed: substream(s.seed, EMBED_STREAM),
            };
            train_transe(kb, &cfg)?
        }
    };
    if tab.num_entities() != kb.num_entities() || tab.num_relations() != kb.num_relations() {
        bail!(
            "embeddings cover {} entities / {} relations, knowledge base has {} / {}",
            tab.num_entities(),
            tab.num_relations(),
            kb.num_entities(),
            kb.num_relations()
        );
    }
    Ok(tab)
}

fn experts(s: &Settings, kb: &KnowledgeBase) -> Result<PathSet> {
    match s.path("experts") {
        Some(path) => Ok(PathSet::load(kb, &path, PathSource::Expert)?),
        None => Ok(sample_expert_paths(kb, s.get("expert-count")?, s.get("hops")?, substream(s.seed, EXPERT_STREAM))?),
    }
}

fn train_config(s: &Settings, seed: u64) -> Result<TrainConfig> {
    Ok(TrainConfig {
        rounds: s.get("rounds")?,
        episodes_per_round: s.get("episodes")?,
        batch_size: s.get("batch-size")?,
        policy_lr: s.get("policy-lr")?,
        comparator_lr: s.get("comparator-lr")?,
        entropy_coef: s.get("entropy-coef")?,
        hop_bound: s.get("hops")?,
        hidden: s.get("hidden")?,
        seed,
        track_tv: s.get("track-tv")?,
        ..Default::default()
    })
}

fn save_checkpoint(net: &DenseNet64, path: &Path) -> Result<()> {
    let mut w = create(path)?;
    net.write_checkpoint(&mut w).with_context(|| format!("writing {}", path.display()))?;
    finish(w, path)
}

pub fn synth(s: &Settings) -> Result<()> {
    let kb = knowledge_base(s)?;
    let path = s.output("kb.tsv")?;
    let mut w = create(&path)?;
    kb.write_tsv(&mut w).with_context(|| format!("writing {}", path.display()))?;
    finish(w, &path)
}

pub fn embed(s: &Settings) -> Result<()> {
    let kb = knowledge_base(s)?;
    let tab = embeddings(s, &kb)?;
    let path = s.output("embeddings.csv")?;
    let mut w = create(&path)?;
    tab.write_csv(&mut w)?;
    finish(w, &path)
}

pub fn experts_cmd(s: &Settings) -> Result<()> {
    let kb = knowledge_base(s)?;
    let set = experts(s, &kb)?;
    let path = s.output("experts.tsv")?;
    let mut w = create(&path)?;
    set.write(&kb, &mut w).with_context(|| format!("writing {}", path.display()))?;
    finish(w, &path)
}

fn write_trace(trace: &MetricTrace, path: &Path) -> Result<()> {
    let mut w = create(path)?;
    trace.write_csv(&mut w)?;
    finish(w, path)
}

pub fn train_cmd(s: &Settings) -> Result<()> {
    let kb = knowledge_base(s)?;
    let tab = embeddings(s, &kb)?;
    let set = experts(s, &kb)?;
    let out: TrainOutcome64 = train(&kb, &kb, &tab, &set, &train_config(s, substream(s.seed, TRAIN_STREAM))?)?;
    write_trace(&out.trace, &s.output("metrics.csv")?)?;
    save_checkpoint(&out.policy.net, &s.output("policy.ckpt")?)?;
    save_checkpoint(&out.best_policy.net, &s.output("best_policy.ckpt")?)?;
    save_checkpoint(&out.comparator.net, &s.output("comparator.ckpt")?)
}

pub fn eval(s: &Settings) -> Result<()> {
    let kb = knowledge_base(s)?;
    let tab = embeddings(s, &kb)?;
    let hops: usize = s.get("hops")?;
    let samples: usize = s.get("samples-per-origin")?;
    let parts = partition_skgs(&kb, s.get("skgs")?, substream(s.seed, EVAL_STREAM))?;
    let path = s.output("accuracy.csv")?;
    let mut w = create(&path)?;
    writeln!(w, "skg,density,method,accuracy")?;
    for (i, sub) in parts.iter().enumerate() {
        let base = substream(s.seed, EVAL_STREAM + 16 * (i as u64 + 1));
        let sub_tab = tab.restrict(&kb, sub)?;
        let set = sample_expert_paths(sub, s.get("expert-count")?, hops, substream(base, 0))
            .with_context(|| format!("sampling experts in SKG {}", i + 1))?;
        let test = sample_expert_paths(sub, s.get("test-paths")?, hops, substream(base, 1))?;
        let out = train(sub, sub, &sub_tab, &set, &train_config(s, substream(base, 2))?)?;
        let gaml = evaluate_accuracy(&out.policy, sub, &sub_tab, &test, samples, substream(base, 3))?;
        let ga_cfg = GaConfig {
            population: s.get("ga-population")?,
            generations: s.get("ga-generations")?,
            seed: substream(base, 4),
            ..Default::default()
        };
        let ga = ga_accuracy(sub, &sub_tab, &out.comparator, &test, samples, &ga_cfg)?;
        writeln!(w, "{},{},GAML,{gaml}", i + 1, sub.density())?;
        writeln!(w, "{},{},GA,{ga}", i + 1, sub.density())?;
    }
    finish(w, &path)
}

fn policy(s: &Settings, kb: &KnowledgeBase, tab: &EmbeddingTable64) -> Result<PolicyModel64> {
    match s.path("policy") {
        Some(path) => {
            let f = File::open(&path).with_context(|| format!("opening {}", path.display()))?;
            let net = DenseNet64::read_checkpoint(f).with_context(|| format!("reading {}", path.display()))?;
            Ok(PolicyModel64::from_net(kb, net, s.get("hops")?)?)
        }
        None => {
            let set = experts(s, kb)?;
            Ok(train(kb, kb, tab, &set, &train_config(s, substream(s.seed, TRAIN_STREAM))?)?.policy)
        }
    }
}

pub fn channel(s: &Settings) -> Result<()> {
    let kb = knowledge_base(s)?;
    let tab = embeddings(s, &kb)?;
    let m = policy(s, &kb, &tab)?;
    let modes = s.list::<RecoveryMode>("modes")?;
    let cfg = ChannelConfig {
        snr_db: s.list("snr-db")?,
        packets_per_point: s.get("packets")?,
        modes,
        message_hops: s.get("message-hops")?,
        shortlist: s.get("shortlist")?,
        seed: substream(s.seed, CHANNEL_STREAM),
    };
    let rows = per_sweep(&cfg, &kb, &tab, &m)?;
    let path = s.output("per.csv")?;
    let mut w = create(&path)?;
    write_sweep_csv(&rows, &mut w)?;
    finish(w, &path)
}

fn mean_trace(traces: &[MetricTrace]) -> MetricTrace {
    let n = traces.len() as f64;
    let rounds = traces.iter().map(MetricTrace::len).min().unwrap_or(0);
    let records = (0..rounds)
        .map(|r| {
            let avg = |f: &dyn Fn(&RoundMetrics) -> f64| traces.iter().map(|t| f(&t.records[r])).sum::<f64>() / n;
            let tv: Option<Vec<f64>> = traces.iter().map(|t| t.records[r].tv_distance).collect();
            RoundMetrics {
                round: r,
                comparator_loss: avg(&|m| m.comparator_loss),
                interpreter_loss: avg(&|m| m.interpreter_loss),
                mean_q: avg(&|m| m.mean_q),
                entropy: avg(&|m| m.entropy),
                tv_distance: tv.map(|v| v.iter().sum::<f64>() / n),
            }
        })
        .collect();
    MetricTrace { records }
}

/// Per expert count: `metrics_n<count>.csv` averaged over seeds, plus one
/// `summary.csv` row with the final-round means.
pub fn sweep_experts(s: &Settings) -> Result<()> {
    let kb = knowledge_base(s)?;
    let tab = embeddings(s, &kb)?;
    let counts: Vec<usize> = s.list("expert-counts")?;
    let seeds: u64 = s.get("sweep-seeds")?;
    let hops: usize = s.get("hops")?;
    let summary_path = s.output("summary.csv")?;
    let mut summary = create(&summary_path)?;
    writeln!(summary, "expert_count,final_comp_loss,final_interp_loss,final_tv_distance")?;
    for &count in &counts {
        let mut traces = Vec::new();
        for k in 0..seeds {
            let base = substream(substream(s.seed, EXPERT_STREAM), k);
            let set = sample_expert_paths(&kb, count, hops, base)?;
            traces.push(train(&kb, &kb, &tab, &set, &train_config(s, substream(base, 1))?)?.trace);
        }
        let mean = mean_trace(&traces);
        let path: PathBuf = s.output(&format!("metrics_n{count}.csv"))?;
        write_trace(&mean, &path)?;
        let last = mean.records.last();
        writeln!(
            summary,
            "{count},{},{},{}",
            last.map(|m| m.comparator_loss.to_string()).unwrap_or_default(),
            last.map(|m| m.interpreter_loss.to_string()).unwrap_or_default(),
            last.and_then(|m| m.tv_distance).map(|v| v.to_string()).unwrap_or_default(),
        )?;
    }
    finish(summary, &summary_path)
}
