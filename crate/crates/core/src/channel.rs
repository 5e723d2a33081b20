//! Entity packets over a BPSK/AWGN channel, with plain and reasoning-aided
//! recovery at the receiver.
//!
//! Wire format: each embedding component takes 38 bits, dimension-major:
//! a sign bit (1 = negative), 3 integer bits, then 34 fractional bits, both
//! MSB first. A 100-dimensional entity therefore fills a 3800-bit packet.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::embedding::EmbeddingTable;
use crate::error::{Error, Result};
use crate::kg::{EntityId, ExpertSampler, KnowledgeBase};
use crate::policy::{PolicyModel, DEFAULT_ENUMERATION_CAP};
use crate::rng::{seeded, substream};
use crate::scalar::Scalar;

pub const INT_BITS: usize = 3;
pub const FRAC_BITS: usize = 34;
pub const BITS_PER_DIM: usize = 1 + INT_BITS + FRAC_BITS;
/// Largest magnitude accepted by [`quantize`] (exclusive on the positive side).
pub const RANGE: f64 = 4.0;

const SCALE: f64 = (1u64 << FRAC_BITS) as f64;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Packet {
    pub bits: Vec<bool>,
    /// Ground truth, used only for scoring.
    pub entity: EntityId,
}

pub fn quantize_vector(v: &[f64]) -> Result<Vec<bool>> {
    let mut bits = Vec::with_capacity(v.len() * BITS_PER_DIM);
    for &x in v {
        if !(-RANGE..RANGE).contains(&x) {
            return Err(Error::OutOfRange { value: x });
        }
        let magnitude = (x.abs() * SCALE).round() as u64;
        bits.push(x.is_sign_negative() && magnitude != 0);
        for i in (0..INT_BITS + FRAC_BITS).rev() {
            bits.push(magnitude >> i & 1 == 1);
        }
    }
    Ok(bits)
}

pub fn dequantize(bits: &[bool]) -> Result<Vec<f64>> {
    if !bits.len().is_multiple_of(BITS_PER_DIM) {
        return Err(Error::Shape {
            expected: bits.len().div_ceil(BITS_PER_DIM) * BITS_PER_DIM,
            actual: bits.len(),
        });
    }
    Ok(bits
        .chunks_exact(BITS_PER_DIM)
        .map(|c| {
            let magnitude = c[1..].iter().fold(0u64, |acc, &b| acc << 1 | b as u64);
            let v = magnitude as f64 / SCALE;
            if c[0] {
                -v
            } else {
                v
            }
        })
        .collect())
}

/// Fixed-point packet carrying the embedding of `e`.
pub fn quantize<T: Scalar>(tab: &EmbeddingTable<T>, e: EntityId) -> Result<Packet> {
    let v: Vec<f64> = tab.try_entity(e)?.iter().map(|x| x.as_f64()).collect();
    Ok(Packet {
        bits: quantize_vector(&v)?,
        entity: e,
    })
}

/// Noise standard deviation for unit-energy BPSK at `snr_db` (Eb/N0).
pub fn noise_sigma(snr_db: f64) -> f64 {
    (1.0 / (2.0 * 10f64.powf(snr_db / 10.0))).sqrt()
}

/// BPSK-maps bits (0 → +1, 1 → −1), adds white Gaussian noise and
/// hard-decides by sign. An infinite SNR is a noiseless channel.
pub fn transmit(bits: &[bool], snr_db: f64, seed: u64) -> Vec<bool> {
    if snr_db == f64::INFINITY {
        return bits.to_vec();
    }
    let sigma = noise_sigma(snr_db);
    let mut rng = seeded(seed);
    bits.iter()
        .map(|&b| {
            let s = if b { -1.0 } else { 1.0 };
            let n: f64 = rng.sample(StandardNormal);
            s + sigma * n < 0.0
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum RecoveryMode {
    /// Exact match or erasure.
    None,
    /// Nearest entity embedding.
    Nearest,
    /// Nearest-entity shortlist rescored by the policy's path mass from the
    /// other entities of the message.
    Reasoning,
}

impl RecoveryMode {
    pub const ALL: [RecoveryMode; 3] = [RecoveryMode::None, RecoveryMode::Nearest, RecoveryMode::Reasoning];
}

impl fmt::Display for RecoveryMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RecoveryMode::None => "none",
            RecoveryMode::Nearest => "nearest",
            RecoveryMode::Reasoning => "reasoning",
        })
    }
}

impl FromStr for RecoveryMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(RecoveryMode::None),
            "nearest" => Ok(RecoveryMode::Nearest),
            "reasoning" => Ok(RecoveryMode::Reasoning),
            _ => Err(Error::InvalidArgument(format!("unknown recovery mode {s:?}"))),
        }
    }
}

/// Another entity of the same message, `offset` positions after (positive)
/// or before (negative) the packet being recovered.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ContextEntity {
    pub offset: isize,
    pub entity: EntityId,
}

/// Receiver-side decoder.
#[derive(Clone, Debug)]
pub struct Receiver<'a, T> {
    pub kb: &'a KnowledgeBase,
    pub tab: &'a EmbeddingTable<T>,
    pub policy: &'a PolicyModel<T>,
    /// Candidates rescored in reasoning mode.
    pub shortlist: usize,
    pub enumeration_cap: usize,
}

impl<'a, T: Scalar> Receiver<'a, T> {
    pub fn new(kb: &'a KnowledgeBase, tab: &'a EmbeddingTable<T>, policy: &'a PolicyModel<T>) -> Self {
        Self {
            kb,
            tab,
            policy,
            shortlist: 5,
            enumeration_cap: DEFAULT_ENUMERATION_CAP,
        }
    }

    fn width(&self) -> usize {
        self.tab.dim() * BITS_PER_DIM
    }

    fn shortlist_for(&self, bits: &[bool], k: usize) -> Result<Vec<(EntityId, T)>> {
        if bits.len() != self.width() {
            return Err(Error::Shape {
                expected: self.width(),
                actual: bits.len(),
            });
        }
        let v: Vec<T> = dequantize(bits)?.into_iter().map(T::lit).collect();
        self.tab.nearest_entities(&v, k)
    }

    /// Policy probability of reaching `to` from `from` in exactly `hops` hops,
    /// with `from` as the reasoning origin.
    pub fn path_mass(&self, from: EntityId, to: EntityId, hops: usize) -> Result<f64> {
        let dist = self
            .policy
            .enumerate_distribution(self.kb, self.tab, from, hops, self.enumeration_cap)?;
        Ok(dist.iter().filter(|(p, _)| p.terminal() == to).map(|(_, m)| m).sum())
    }

    /// Decodes one packet. `None` is an erasure (mode `None` only).
    pub fn recover(&self, bits: &[bool], mode: RecoveryMode, context: &[ContextEntity]) -> Result<Option<EntityId>> {
        match mode {
            RecoveryMode::None => {
                let (e, _) = self.shortlist_for(bits, 1)?[0];
                let exact = quantize(self.tab, e)?.bits == bits;
                Ok(exact.then_some(e))
            }
            RecoveryMode::Nearest => Ok(Some(self.shortlist_for(bits, 1)?[0].0)),
            RecoveryMode::Reasoning => {
                let cands = self.shortlist_for(bits, self.shortlist)?;
                let mut best = (cands[0].0, 0usize);
                for &(c, _) in &cands {
                    let mut consistent = 0;
                    for ctx in context {
                        let hops = ctx.offset.unsigned_abs();
                        let mass = if ctx.offset < 0 {
                            self.path_mass(ctx.entity, c, hops)?
                        } else {
                            self.path_mass(c, ctx.entity, hops)?
                        };
                        if mass > 0.0 {
                            consistent += 1;
                        }
                    }
                    // candidates arrive in distance order, so ties keep the closer one
                    if consistent > best.1 {
                        best = (c, consistent);
                    }
                }
                Ok(Some(best.0))
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ChannelConfig {
    pub snr_db: Vec<f64>,
    /// Minimum packets per SNR point; whole messages are sent, so the
    /// realised count is rounded up to a multiple of the message length.
    pub packets_per_point: usize,
    pub modes: Vec<RecoveryMode>,
    /// Hops of each transmitted reasoning path (message length = hops + 1).
    pub message_hops: usize,
    pub shortlist: usize,
    pub seed: u64,
}

impl Default for ChannelConfig {
    fn default() -> Self {
        Self {
            snr_db: vec![0.0, 2.0, 4.0, 6.0, 8.0, 10.0],
            packets_per_point: 500,
            modes: RecoveryMode::ALL.to_vec(),
            message_hops: 2,
            shortlist: 5,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub snr_db: f64,
    pub mode: RecoveryMode,
    pub trials: usize,
    pub errors: usize,
    pub per: f64,
}

/// Monte Carlo packet error rate for every (SNR, mode) pair.
///
/// Each trial sends the entities of one sampled reasoning path as separate
/// packets through the channel. All modes decode the same noisy packets; the
/// reasoning mode uses the nearest-entity decodes of the message's other
/// packets as context.
pub fn per_sweep<T: Scalar>(
    cfg: &ChannelConfig,
    kb: &KnowledgeBase,
    tab: &EmbeddingTable<T>,
    policy: &PolicyModel<T>,
) -> Result<Vec<SweepRow>> {
    if cfg.packets_per_point == 0 || cfg.shortlist == 0 {
        return Err(Error::InvalidArgument("packets per point and shortlist must be >= 1".into()));
    }
    let sampler = ExpertSampler::new(kb, cfg.message_hops)?;
    let receiver = Receiver {
        shortlist: cfg.shortlist,
        ..Receiver::new(kb, tab, policy)
    };
    let len = cfg.message_hops + 1;
    let messages = cfg.packets_per_point.div_ceil(len);
    let mut rows = Vec::with_capacity(cfg.snr_db.len() * cfg.modes.len());
    for (si, &snr) in cfg.snr_db.iter().enumerate() {
        let point_seed = substream(cfg.seed, si as u64);
        let per_message: Vec<Vec<usize>> = (0..messages)
            .into_par_iter()
            .map(|m| {
                let msg_seed = substream(point_seed, m as u64);
                let path = sampler.sample(&mut seeded(msg_seed));
                let truth = path.entities();
                let received: Vec<Vec<bool>> = truth
                    .iter()
                    .enumerate()
                    .map(|(pos, &e)| Ok(transmit(&quantize(tab, e)?.bits, snr, substream(msg_seed, 1 + pos as u64))))
                    .collect::<Result<_>>()?;
                let guesses: Vec<EntityId> = received
                    .iter()
                    .map(|b| Ok(receiver.recover(b, RecoveryMode::Nearest, &[])?.expect("nearest never erases")))
                    .collect::<Result<_>>()?;
                cfg.modes
                    .iter()
                    .map(|&mode| {
                        let mut errors = 0;
                        for (pos, bits) in received.iter().enumerate() {
                            let context: Vec<ContextEntity> = guesses
                                .iter()
                                .enumerate()
                                .filter(|&(j, _)| j != pos)
                                .map(|(j, &entity)| ContextEntity {
                                    offset: j as isize - pos as isize,
                                    entity,
                                })
                                .collect();
                            if receiver.recover(bits, mode, &context)? != Some(truth[pos]) {
                                errors += 1;
                            }
                        }
                        Ok(errors)
                    })
                    .collect()
            })
            .collect::<Result<_>>()?;
        for (mi, &mode) in cfg.modes.iter().enumerate() {
            let errors: usize = per_message.iter().map(|e| e[mi]).sum();
            let trials = messages * len;
            rows.push(SweepRow {
                snr_db: snr,
                mode,
                trials,
                errors,
                per: errors as f64 / trials as f64,
            });
        }
    }
    Ok(rows)
}

/// CSV with header `snr_db,mode,trials,errors,per`.
pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["snr_db", "mode", "trials", "errors", "per"])?;
    for r in rows {
        out.write_record([
            r.snr_db.to_string(),
            r.mode.to_string(),
            r.trials.to_string(),
            r.errors.to_string(),
            r.per.to_string(),
        ])?;
    }
    out.flush().map_err(|e| Error::io("<sweep csv>", e))?;
    Ok(())
}

/// Wilson score interval for `errors / trials` at normal quantile `z`.
pub fn wilson_interval(errors: usize, trials: usize, z: f64) -> (f64, f64) {
    let n = trials as f64;
    let p = errors as f64 / n;
    let z2 = z * z;
    let centre = (p + z2 / (2.0 * n)) / (1.0 + z2 / n);
    let half = z / (1.0 + z2 / n) * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt();
    ((centre - half).max(0.0), (centre + half).min(1.0))
}
