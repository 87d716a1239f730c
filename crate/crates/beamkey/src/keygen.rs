//! Quantization of channel estimates into key bits.
//!
//! The alternating quantizer works on sample phases: the leader (the BS)
//! quantizes each sample's phase into 2^b sectors and publishes, per
//! sample, the rotation that centers its sample inside its sector. The
//! follower applies the published rotation to its own sample and quantizes
//! with the same sector map, so a bit error requires phase noise beyond
//! half a sector width. Sector labels are Gray-coded into bits. The
//! published rotation lives in (-w/2, w/2] and is independent of the
//! sector index, so the helper stream alone reveals nothing about the key.

use std::io::{BufRead, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::linalg::Cpx;

const TAU: f64 = 2.0 * std::f64::consts::PI;

/// Key bits for one BS-UT link, with the leader's public helper stream.
#[derive(Debug, Clone, PartialEq)]
pub struct KeyMaterial {
    /// Leader-side (BS) bits.
    pub bits_leader: Vec<u8>,
    /// Follower-side (UT) bits.
    pub bits_follower: Vec<u8>,
    /// Published per-sample rotations in (-w/2, w/2].
    pub helper: Vec<f64>,
    /// Quantization depth b (bits per sample).
    pub bits_per_sample: u32,
}

#[inline]
fn sector_of(phase: f64, sectors: u32) -> u32 {
    let w = TAU / sectors as f64;
    let mut p = phase % TAU;
    if p < 0.0 {
        p += TAU;
    }
    ((p / w) as u32).min(sectors - 1)
}

#[inline]
fn gray(s: u32) -> u32 {
    s ^ (s >> 1)
}

fn push_bits(out: &mut Vec<u8>, label: u32, b: u32) {
    for i in (0..b).rev() {
        out.push(((label >> i) & 1) as u8);
    }
}

/// Quantize one link's aligned samples into key bits.
pub fn cqa_quantize(leader: &[Cpx], follower: &[Cpx], bits_per_sample: u32) -> Result<KeyMaterial> {
    if leader.is_empty() {
        return Err(Error::InvalidArgument("no samples to quantize".into()));
    }
    if leader.len() != follower.len() {
        return Err(Error::LengthMismatch {
            context: "cqa_quantize",
            a: leader.len(),
            b: follower.len(),
        });
    }
    if bits_per_sample == 0 || bits_per_sample > 16 {
        return Err(Error::InvalidArgument(format!(
            "bits_per_sample must be in 1..=16, got {bits_per_sample}"
        )));
    }
    let sectors = 1u32 << bits_per_sample;
    let w = TAU / sectors as f64;
    let mut bits_leader = Vec::with_capacity(leader.len() * bits_per_sample as usize);
    let mut bits_follower = Vec::with_capacity(leader.len() * bits_per_sample as usize);
    let mut helper = Vec::with_capacity(leader.len());
    for (zl, zf) in leader.iter().zip(follower) {
        let phase_l = zl.arg().rem_euclid(TAU);
        let s_l = sector_of(phase_l, sectors);
        // rotate the leader sample onto its sector center
        let rot = (s_l as f64 + 0.5) * w - phase_l;
        let s_f = sector_of(zf.arg() + rot, sectors);
        helper.push(rot);
        push_bits(&mut bits_leader, gray(s_l), bits_per_sample);
        push_bits(&mut bits_follower, gray(s_f), bits_per_sample);
    }
    Ok(KeyMaterial {
        bits_leader,
        bits_follower,
        helper,
        bits_per_sample,
    })
}

/// Best-effort bit guess from the public helper stream alone (used to test
/// that the helper carries no key information).
pub fn helper_guess_bits(helper: &[f64], bits_per_sample: u32) -> Vec<u8> {
    let sectors = 1u32 << bits_per_sample;
    let w = TAU / sectors as f64;
    let mut out = Vec::with_capacity(helper.len() * bits_per_sample as usize);
    for &r in helper {
        // map the rotation offset onto the sector range deterministically
        let frac = ((r + w / 2.0) / w).clamp(0.0, 1.0 - 1e-12);
        let s = (frac * sectors as f64) as u32;
        push_bits(&mut out, gray(s.min(sectors - 1)), bits_per_sample);
    }
    out
}

/// Bit disagreement ratio: Hamming distance over length.
pub fn bdr(a: &[u8], b: &[u8]) -> Result<f64> {
    if a.len() != b.len() || a.is_empty() {
        return Err(Error::LengthMismatch {
            context: "bdr",
            a: a.len(),
            b: b.len(),
        });
    }
    let diff = a.iter().zip(b).filter(|(x, y)| x != y).count();
    Ok(diff as f64 / a.len() as f64)
}

/// Write bit sequences as ASCII '0'/'1' lines.
pub fn write_bits<P: AsRef<Path>>(path: P, sequences: &[Vec<u8>]) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    for seq in sequences {
        let line: String = seq.iter().map(|&b| if b == 0 { '0' } else { '1' }).collect();
        writeln!(f, "{line}")?;
    }
    f.flush()?;
    Ok(())
}

/// Read bit sequences written by [`write_bits`].
pub fn read_bits<P: AsRef<Path>>(path: P) -> Result<Vec<Vec<u8>>> {
    let f = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in f.lines().enumerate() {
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let mut seq = Vec::with_capacity(line.len());
        for ch in line.chars() {
            match ch {
                '0' => seq.push(0),
                '1' => seq.push(1),
                other => {
                    return Err(Error::InvalidArgument(format!(
                        "bit file line {}: unexpected character {other:?}",
                        i + 1
                    )))
                }
            }
        }
        out.push(seq);
    }
    Ok(out)
}
