//! On-disk containers for recordings and cue schedules.
//!
//! Two recording forms share one logical layout (header, then
//! channel-major samples):
//!
//! Binary (`.eeg`): magic `EEGR`, u32 version, f64 fs, u32 n_channels,
//! u64 n_samples, f64 t0, per channel (u32 label length + UTF-8 label),
//! then n_channels * n_samples little-endian f64 samples, channel-major.
//!
//! Text (`.eeg.txt`): `# eegrec v1` header line, `fs`/`channels`/
//! `samples`/`t0`/`label <i> <name>` key lines, a `data` line, then one
//! whitespace-separated line of samples per channel. Times are seconds,
//! amplitudes microvolts.
//!
//! Cue schedule (text): `# cues v1`, then one `idle <s>` or `walk <s>`
//! line per epoch.

use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{ClassLabel, CueSchedule, Recording};
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"EEGR";
const VERSION: u32 = 1;

pub fn write_recording_binary(rec: &Recording, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&rec.fs().to_le_bytes())?;
    w.write_all(&(rec.n_channels() as u32).to_le_bytes())?;
    w.write_all(&(rec.n_samples() as u64).to_le_bytes())?;
    w.write_all(&rec.t0().to_le_bytes())?;
    for label in rec.channel_labels() {
        w.write_all(&(label.len() as u32).to_le_bytes())?;
        w.write_all(label.as_bytes())?;
    }
    for ch in rec.channels() {
        for &v in ch {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

fn read_exact<const N: usize>(r: &mut impl Read) -> Result<[u8; N]> {
    let mut buf = [0u8; N];
    r.read_exact(&mut buf)?;
    Ok(buf)
}

pub fn read_recording_binary(path: &Path) -> Result<Recording> {
    let mut r = BufReader::new(std::fs::File::open(path)?);
    let magic = read_exact::<4>(&mut r)?;
    if &magic != MAGIC {
        return Err(Error::Format("not an EEGR recording file".into()));
    }
    let version = u32::from_le_bytes(read_exact::<4>(&mut r)?);
    if version != VERSION {
        return Err(Error::Format(format!(
            "recording file version {version}, expected {VERSION}"
        )));
    }
    let fs = f64::from_le_bytes(read_exact::<8>(&mut r)?);
    let n_channels = u32::from_le_bytes(read_exact::<4>(&mut r)?) as usize;
    let n_samples = u64::from_le_bytes(read_exact::<8>(&mut r)?) as usize;
    let t0 = f64::from_le_bytes(read_exact::<8>(&mut r)?);
    let mut labels = Vec::with_capacity(n_channels);
    for _ in 0..n_channels {
        let len = u32::from_le_bytes(read_exact::<4>(&mut r)?) as usize;
        let mut buf = vec![0u8; len];
        r.read_exact(&mut buf)?;
        labels.push(String::from_utf8(buf).map_err(|e| Error::Format(e.to_string()))?);
    }
    let mut samples = Vec::with_capacity(n_channels);
    for _ in 0..n_channels {
        let mut ch = Vec::with_capacity(n_samples);
        for _ in 0..n_samples {
            ch.push(f64::from_le_bytes(read_exact::<8>(&mut r)?));
        }
        samples.push(ch);
    }
    Recording::new(samples, fs, labels, t0)
}

pub fn write_recording_text(rec: &Recording, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "# eegrec v{VERSION}")?;
    writeln!(w, "fs {}", rec.fs())?;
    writeln!(w, "channels {}", rec.n_channels())?;
    writeln!(w, "samples {}", rec.n_samples())?;
    writeln!(w, "t0 {}", rec.t0())?;
    for (i, label) in rec.channel_labels().iter().enumerate() {
        writeln!(w, "label {i} {label}")?;
    }
    writeln!(w, "data")?;
    for ch in rec.channels() {
        let mut first = true;
        for &v in ch {
            if !first {
                write!(w, " ")?;
            }
            write!(w, "{v}")?;
            first = false;
        }
        writeln!(w)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_recording_text(path: &Path) -> Result<Recording> {
    let file = BufReader::new(std::fs::File::open(path)?);
    let mut lines = file.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Format("empty recording file".into()))??;
    if header.trim() != format!("# eegrec v{VERSION}") {
        return Err(Error::Format(format!("bad header line {header:?}")));
    }
    let mut fs = None;
    let mut n_channels = None;
    let mut n_samples = None;
    let mut t0 = 0.0;
    let mut labels: Vec<(usize, String)> = Vec::new();
    for line in lines.by_ref() {
        let line = line?;
        let line = line.trim();
        if line == "data" {
            break;
        }
        let mut parts = line.splitn(2, ' ');
        let key = parts.next().unwrap_or("");
        let val = parts.next().unwrap_or("").trim();
        match key {
            "fs" => fs = Some(parse_f64(val)?),
            "channels" => n_channels = Some(parse_usize(val)?),
            "samples" => n_samples = Some(parse_usize(val)?),
            "t0" => t0 = parse_f64(val)?,
            "label" => {
                let mut lp = val.splitn(2, ' ');
                let idx = parse_usize(lp.next().unwrap_or(""))?;
                labels.push((idx, lp.next().unwrap_or("").to_string()));
            }
            other => return Err(Error::Format(format!("unknown header key {other:?}"))),
        }
    }
    let fs = fs.ok_or_else(|| Error::Format("missing fs".into()))?;
    let n_channels = n_channels.ok_or_else(|| Error::Format("missing channels".into()))?;
    let n_samples = n_samples.ok_or_else(|| Error::Format("missing samples".into()))?;
    labels.sort_by_key(|&(i, _)| i);
    let labels: Vec<String> = labels.into_iter().map(|(_, l)| l).collect();
    if labels.len() != n_channels {
        return Err(Error::Format("label count does not match channel count".into()));
    }
    let mut samples = Vec::with_capacity(n_channels);
    for line in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let ch: Vec<f64> = line
            .split_ascii_whitespace()
            .map(parse_f64)
            .collect::<Result<_>>()?;
        if ch.len() != n_samples {
            return Err(Error::Format(format!(
                "channel row has {} samples, header says {n_samples}",
                ch.len()
            )));
        }
        samples.push(ch);
    }
    if samples.len() != n_channels {
        return Err(Error::Format(format!(
            "found {} channel rows, header says {n_channels}",
            samples.len()
        )));
    }
    Recording::new(samples, fs, labels, t0)
}

pub fn write_cues(cues: &CueSchedule, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "# cues v1")?;
    for &(state, dur) in cues.entries() {
        writeln!(w, "{state} {dur}")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_cues(path: &Path) -> Result<CueSchedule> {
    let file = BufReader::new(std::fs::File::open(path)?);
    let mut entries = Vec::new();
    for line in file.lines() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut parts = line.split_ascii_whitespace();
        let state = ClassLabel::parse(parts.next().unwrap_or(""))?;
        let dur = parse_f64(parts.next().ok_or_else(|| {
            Error::Format(format!("cue line missing duration: {line:?}"))
        })?)?;
        entries.push((state, dur));
    }
    CueSchedule::new(entries)
}

fn parse_f64(s: &str) -> Result<f64> {
    s.parse::<f64>()
        .map_err(|_| Error::Format(format!("bad number {s:?}")))
}

fn parse_usize(s: &str) -> Result<usize> {
    s.parse::<usize>()
        .map_err(|_| Error::Format(format!("bad integer {s:?}")))
}
