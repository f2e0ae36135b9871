//! Raw I/Q files: a short text header terminated by an `end` line, then
//! interleaved little-endian `f32` I/Q pairs.

use std::io::{BufRead, BufReader, Read, Write};

use num_complex::Complex64;

use super::Numerology;
use crate::error::{Error, Result};

const MAGIC: &str = "beamswitch-iq 1";

#[derive(Debug, Clone, PartialEq)]
pub struct IqHeader {
    pub sample_rate: f64,
    pub fft_size: usize,
    pub cp_length: usize,
    pub symbols: usize,
    pub samples: usize,
}

impl IqHeader {
    pub fn for_slot(num: &Numerology, samples: usize) -> Self {
        Self {
            sample_rate: num.sample_rate,
            fft_size: num.fft_size,
            cp_length: num.cp_length,
            symbols: num.symbols_per_slot,
            samples,
        }
    }

    /// Start offsets of each symbol (CP included).
    pub fn symbol_starts(&self) -> Vec<usize> {
        (0..self.symbols).map(|s| s * (self.fft_size + self.cp_length)).collect()
    }
}

pub fn write_iq<W: Write>(mut w: W, header: &IqHeader, samples: &[Complex64]) -> Result<()> {
    writeln!(w, "{MAGIC}")?;
    writeln!(w, "sample_rate {}", header.sample_rate)?;
    writeln!(w, "fft_size {}", header.fft_size)?;
    writeln!(w, "cp_length {}", header.cp_length)?;
    writeln!(w, "symbols {}", header.symbols)?;
    let starts: Vec<String> = header.symbol_starts().iter().map(|s| s.to_string()).collect();
    writeln!(w, "symbol_starts {}", starts.join(","))?;
    writeln!(w, "samples {}", samples.len())?;
    writeln!(w, "end")?;
    let mut buf = Vec::with_capacity(samples.len() * 8);
    for z in samples {
        buf.extend_from_slice(&(z.re as f32).to_le_bytes());
        buf.extend_from_slice(&(z.im as f32).to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

pub fn read_iq<R: Read>(r: R) -> Result<(IqHeader, Vec<Complex64>)> {
    let mut r = BufReader::new(r);
    let mut line = String::new();
    let bad = |m: String| Error::Format(m);
    r.read_line(&mut line)?;
    if line.trim_end() != MAGIC {
        return Err(bad(format!("not an I/Q file: {:?}", line.trim_end())));
    }
    let mut h = IqHeader { sample_rate: 0.0, fft_size: 0, cp_length: 0, symbols: 0, samples: 0 };
    loop {
        line.clear();
        if r.read_line(&mut line)? == 0 {
            return Err(bad("header ended without `end`".into()));
        }
        let l = line.trim_end();
        if l == "end" {
            break;
        }
        let (k, v) = l.split_once(' ').ok_or_else(|| bad(format!("bad header line {l:?}")))?;
        let num = |v: &str| v.parse::<usize>().map_err(|e| bad(format!("{k}: {e}")));
        match k {
            "sample_rate" => h.sample_rate = v.parse().map_err(|e| bad(format!("{k}: {e}")))?,
            "fft_size" => h.fft_size = num(v)?,
            "cp_length" => h.cp_length = num(v)?,
            "symbols" => h.symbols = num(v)?,
            "samples" => h.samples = num(v)?,
            _ => {}
        }
    }
    let mut raw = Vec::new();
    r.read_to_end(&mut raw)?;
    if raw.len() != h.samples * 8 {
        return Err(bad(format!("expected {} payload bytes, found {}", h.samples * 8, raw.len())));
    }
    let samples = raw
        .chunks_exact(8)
        .map(|c| {
            let re = f32::from_le_bytes([c[0], c[1], c[2], c[3]]);
            let im = f32::from_le_bytes([c[4], c[5], c[6], c[7]]);
            Complex64::new(re as f64, im as f64)
        })
        .collect();
    Ok((h, samples))
}
