//! Signal files: CSV columns and binary PGM images.

use std::fs;
use std::io::Write;
use std::path::Path;

/// A signal with its grid shape.
#[derive(Clone, Debug, PartialEq)]
pub struct Signal {
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

impl Signal {
    pub fn one_d(values: Vec<f64>) -> Signal {
        Signal {
            shape: vec![values.len()],
            values,
        }
    }
}

fn is_pgm(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("pgm"))
}

pub fn read_signal(path: &Path) -> Result<Signal, String> {
    if is_pgm(path) {
        let bytes = fs::read(path).map_err(|e| format!("{}: {e}", path.display()))?;
        read_pgm(&bytes).map_err(|e| format!("{}: {e}", path.display()))
    } else {
        let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        read_csv(&text).map(Signal::one_d).map_err(|e| format!("{}: {e}", path.display()))
    }
}

/// One value per row; with several columns the last one is used. A
/// non-numeric first row is taken as a header.
pub fn read_csv(text: &str) -> Result<Vec<f64>, String> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| e.to_string())?;
        let Some(field) = rec.iter().last() else { continue };
        if field.is_empty() && rec.len() == 1 {
            continue;
        }
        match field.parse::<f64>() {
            Ok(v) if v.is_finite() => out.push(v),
            Ok(v) => return Err(format!("row {}: non-finite value {v}", i + 1)),
            Err(_) if i == 0 => continue,
            Err(_) => return Err(format!("row {}: cannot parse `{field}`", i + 1)),
        }
    }
    if out.is_empty() {
        return Err("no values".into());
    }
    Ok(out)
}

fn pgm_tokens(bytes: &[u8], count: usize) -> Result<(Vec<String>, usize), String> {
    let mut toks = Vec::new();
    let mut i = 0;
    while toks.len() < count {
        while i < bytes.len() && bytes[i].is_ascii_whitespace() {
            i += 1;
        }
        if i < bytes.len() && bytes[i] == b'#' {
            while i < bytes.len() && bytes[i] != b'\n' {
                i += 1;
            }
            continue;
        }
        let start = i;
        while i < bytes.len() && !bytes[i].is_ascii_whitespace() {
            i += 1;
        }
        if start == i {
            return Err("truncated header".into());
        }
        toks.push(String::from_utf8_lossy(&bytes[start..i]).into_owned());
    }
    // exactly one whitespace byte separates the header from the raster
    Ok((toks, i + 1))
}

/// Binary greymap (`P5`), scaled to `[0, 1]`.
pub fn read_pgm(bytes: &[u8]) -> Result<Signal, String> {
    let (toks, start) = pgm_tokens(bytes, 4)?;
    if toks[0] != "P5" {
        return Err(format!("expected P5 greymap, found `{}`", toks[0]));
    }
    let num = |s: &str| s.parse::<usize>().map_err(|_| format!("bad header field `{s}`"));
    let (w, h, maxval) = (num(&toks[1])?, num(&toks[2])?, num(&toks[3])?);
    if w == 0 || h == 0 || maxval == 0 || maxval > 65535 {
        return Err(format!("unsupported header {w}x{h} maxval {maxval}"));
    }
    let bpp = if maxval < 256 { 1 } else { 2 };
    let need = w * h * bpp;
    let raster = bytes.get(start..start + need).ok_or("truncated raster")?;
    let scale = maxval as f64;
    let values = if bpp == 1 {
        raster.iter().map(|&b| b as f64 / scale).collect()
    } else {
        raster
            .chunks_exact(2)
            .map(|c| u16::from_be_bytes([c[0], c[1]]) as f64 / scale)
            .collect()
    };
    Ok(Signal {
        shape: vec![h, w],
        values,
    })
}

/// 16-bit `P5` with values clamped to `[0, 1]`.
pub fn write_pgm(path: &Path, shape: [usize; 2], values: &[f64]) -> std::io::Result<()> {
    let [h, w] = shape;
    let mut buf = format!("P5\n{w} {h}\n65535\n").into_bytes();
    for v in values {
        let q = (v.clamp(0.0, 1.0) * 65535.0).round() as u16;
        buf.extend_from_slice(&q.to_be_bytes());
    }
    fs::write(path, buf)
}

pub fn write_values_csv(path: &Path, values: &[f64]) -> std::io::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["index", "value"])?;
    for (i, v) in values.iter().enumerate() {
        w.write_record([i.to_string(), v.to_string()])?;
    }
    w.flush()
}

pub fn write_text(path: &Path, text: &str) -> std::io::Result<()> {
    let mut f = fs::File::create(path)?;
    f.write_all(text.as_bytes())?;
    if !text.ends_with('\n') {
        f.write_all(b"\n")?;
    }
    Ok(())
}

/// Writes a signal as PGM when it is two-dimensional, CSV otherwise.
/// Returns the file name used.
pub fn write_signal(dir: &Path, stem: &str, shape: &[usize], values: &[f64]) -> std::io::Result<String> {
    if let [h, w] = shape {
        let name = format!("{stem}.pgm");
        write_pgm(&dir.join(&name), [*h, *w], values)?;
        Ok(name)
    } else {
        let name = format!("{stem}.csv");
        write_values_csv(&dir.join(&name), values)?;
        Ok(name)
    }
}
