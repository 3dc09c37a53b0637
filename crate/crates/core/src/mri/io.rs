//! On-disk dataset and reconstruction formats.
//!
//! * `*.pgm`: binary PGM. Images are 16-bit big-endian with a `# scale <v>`
//!   comment so a sample `q` decodes to `q / maxval · v`; the mask uses maxval 1.
//! * `*.cplx`: `"CPLX"`, `u32` rows, `u32` cols, four zero bytes, then
//!   row-major little-endian `f64` real/imaginary pairs.
//! * `meta.txt`, `metrics.txt`: `key=value` lines.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use super::quality::{psnr, rel_err, snr};
use super::synth::{MaskKind, MriDataset};
use crate::blockspace::{Block, C64};
use crate::error::{Error, Result};

const CPLX_MAGIC: &[u8; 4] = b"CPLX";
const CPLX_HEADER: usize = 16;

pub const GROUND_TRUTH_FILE: &str = "ground_truth.pgm";
pub const MASK_FILE: &str = "mask.pgm";
pub const META_FILE: &str = "meta.txt";
pub const RECON_FILE: &str = "recon.pgm";
pub const METRICS_FILE: &str = "metrics.txt";
pub const TRACE_FILE: &str = "trace.csv";

pub fn sens_file(i: usize) -> String {
    format!("sens_{i}.cplx")
}

pub fn kspace_file(i: usize) -> String {
    format!("kspace_{i}.cplx")
}

/// Decoded PGM raster.
#[derive(Clone, Debug, PartialEq)]
pub struct Pgm {
    pub rows: usize,
    pub cols: usize,
    pub maxval: u16,
    pub scale: f64,
    pub samples: Vec<u16>,
}

impl Pgm {
    pub fn values(&self) -> Vec<f64> {
        let m = self.maxval as f64;
        self.samples.iter().map(|&q| q as f64 / m * self.scale).collect()
    }
}

/// Encodes non-negative magnitudes at full 16-bit range.
pub fn encode_pgm16(rows: usize, cols: usize, values: &[f64]) -> Result<Vec<u8>> {
    if values.len() != rows * cols {
        return Err(Error::shape(&[rows, cols], &[values.len()]));
    }
    if values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
        return Err(Error::Format("image values must be finite and non-negative".into()));
    }
    let peak = values.iter().copied().fold(0.0, f64::max);
    let scale = if peak > 0.0 { peak } else { 1.0 };
    let mut out = format!("P5\n# scale {scale:?}\n{cols} {rows}\n65535\n").into_bytes();
    for v in values {
        let q = (v / scale * 65535.0).round().clamp(0.0, 65535.0) as u16;
        out.extend_from_slice(&q.to_be_bytes());
    }
    Ok(out)
}

pub fn encode_mask_pgm(rows: usize, cols: usize, mask: &[u8]) -> Result<Vec<u8>> {
    if mask.len() != rows * cols {
        return Err(Error::shape(&[rows, cols], &[mask.len()]));
    }
    let mut out = format!("P5\n{cols} {rows}\n1\n").into_bytes();
    out.extend_from_slice(mask);
    Ok(out)
}

pub fn decode_pgm(bytes: &[u8]) -> Result<Pgm> {
    let bad = |m: &str| Error::Format(format!("PGM: {m}"));
    let mut pos = 0;
    let mut scale = 1.0;
    let mut fields = Vec::new();
    while fields.len() < 4 {
        match bytes.get(pos) {
            None => return Err(bad("truncated header")),
            Some(b'#') => {
                let end = bytes[pos..]
                    .iter()
                    .position(|&b| b == b'\n')
                    .map_or(bytes.len(), |e| pos + e);
                let comment = String::from_utf8_lossy(&bytes[pos + 1..end]);
                if let Some(v) = comment.trim().strip_prefix("scale") {
                    scale = v.trim().parse().map_err(|_| bad("bad scale comment"))?;
                }
                pos = end + 1;
            }
            Some(b) if b.is_ascii_whitespace() => pos += 1,
            Some(_) => {
                let end = bytes[pos..]
                    .iter()
                    .position(|b| b.is_ascii_whitespace())
                    .map_or(bytes.len(), |e| pos + e);
                fields.push(String::from_utf8_lossy(&bytes[pos..end]).into_owned());
                pos = end;
            }
        }
    }
    if fields[0] != "P5" {
        return Err(bad("only binary (P5) files are supported"));
    }
    let num = |s: &str| s.parse::<usize>().map_err(|_| bad("bad header number"));
    let (cols, rows, maxval) = (num(&fields[1])?, num(&fields[2])?, num(&fields[3])?);
    if maxval == 0 || maxval > 65535 {
        return Err(bad("maxval out of range"));
    }
    pos += 1;
    let data = bytes.get(pos..).unwrap_or(&[]);
    let wide = maxval > 255;
    let need = rows * cols * if wide { 2 } else { 1 };
    if data.len() != need {
        return Err(bad(&format!("expected {need} data bytes, found {}", data.len())));
    }
    let samples: Vec<u16> = if wide {
        data.chunks(2).map(|c| u16::from_be_bytes([c[0], c[1]])).collect()
    } else {
        data.iter().map(|&b| b as u16).collect()
    };
    if samples.iter().any(|&q| q as usize > maxval) {
        return Err(bad("sample exceeds maxval"));
    }
    Ok(Pgm { rows, cols, maxval: maxval as u16, scale, samples })
}

pub fn encode_cplx(rows: usize, cols: usize, data: &[C64]) -> Result<Vec<u8>> {
    if data.len() != rows * cols {
        return Err(Error::shape(&[rows, cols], &[data.len()]));
    }
    let mut out = Vec::with_capacity(CPLX_HEADER + 16 * data.len());
    out.extend_from_slice(CPLX_MAGIC);
    out.extend_from_slice(&(rows as u32).to_le_bytes());
    out.extend_from_slice(&(cols as u32).to_le_bytes());
    out.extend_from_slice(&[0; 4]);
    for z in data {
        out.extend_from_slice(&z.re.to_le_bytes());
        out.extend_from_slice(&z.im.to_le_bytes());
    }
    Ok(out)
}

pub fn decode_cplx(bytes: &[u8]) -> Result<(usize, usize, Vec<C64>)> {
    if bytes.len() < CPLX_HEADER || &bytes[..4] != CPLX_MAGIC {
        return Err(Error::Format("CPLX: missing header".into()));
    }
    let word = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap()) as usize;
    let (rows, cols) = (word(4), word(8));
    let body = &bytes[CPLX_HEADER..];
    if body.len() != 16 * rows * cols {
        return Err(Error::Format(format!(
            "CPLX: {rows}×{cols} needs {} bytes, found {}",
            16 * rows * cols,
            body.len()
        )));
    }
    let f = |c: &[u8]| f64::from_le_bytes(c.try_into().unwrap());
    let data = body.chunks(16).map(|c| C64::new(f(&c[..8]), f(&c[8..]))).collect();
    Ok((rows, cols, data))
}

pub fn encode_key_values(kv: &[(&str, String)]) -> String {
    kv.iter().map(|(k, v)| format!("{k}={v}\n")).collect()
}

pub fn parse_key_values(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for line in text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#')) {
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Format(format!("expected key=value, got `{line}`")))?;
        out.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(out)
}

fn read(path: &Path) -> Result<Vec<u8>> {
    Ok(fs::read(path)?)
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut f = fs::File::create(path)?;
    f.write_all(bytes)?;
    Ok(())
}

pub fn write_dataset(dir: &Path, d: &MriDataset) -> Result<()> {
    fs::create_dir_all(dir)?;
    let (m, n) = (d.rows, d.cols);
    write_file(&dir.join(GROUND_TRUTH_FILE), &encode_pgm16(m, n, &d.ground_truth)?)?;
    write_file(&dir.join(MASK_FILE), &encode_mask_pgm(m, n, &d.mask)?)?;
    for (i, s) in d.sensitivities.iter().enumerate() {
        write_file(&dir.join(sens_file(i)), &encode_cplx(m, n, s)?)?;
    }
    for (i, k) in d.kspace.data().chunks(m * n).enumerate() {
        write_file(&dir.join(kspace_file(i)), &encode_cplx(m, n, k)?)?;
    }
    let mut meta = vec![
        ("size", format!("{m}x{n}")),
        ("coils", d.coils().to_string()),
        ("ratio", format!("{:.3}", d.ratio())),
        ("sigma", format!("{:?}", d.noise_sigma)),
        ("seed", d.seed.to_string()),
    ];
    if let Some(k) = d.mask_kind {
        meta.push(("mask", k.to_string()));
    }
    write_file(&dir.join(META_FILE), encode_key_values(&meta).as_bytes())
}

fn meta_field<T: std::str::FromStr>(meta: &BTreeMap<String, String>, key: &str) -> Result<T> {
    meta.get(key)
        .ok_or_else(|| Error::Format(format!("meta file lacks `{key}`")))?
        .parse()
        .map_err(|_| Error::Format(format!("meta `{key}` is malformed")))
}

/// Reads a dataset directory. The ground truth is the decoded 16-bit image.
pub fn read_dataset(dir: &Path) -> Result<MriDataset> {
    let meta = parse_key_values(&String::from_utf8_lossy(&read(&dir.join(META_FILE))?))?;
    let size: String = meta_field(&meta, "size")?;
    let (m, n) = size
        .split_once('x')
        .and_then(|(a, b)| Some((a.parse().ok()?, b.parse().ok()?)))
        .ok_or_else(|| Error::Format(format!("bad size `{size}`")))?;
    let coils: usize = meta_field(&meta, "coils")?;
    let gt = decode_pgm(&read(&dir.join(GROUND_TRUTH_FILE))?)?;
    let mask = decode_pgm(&read(&dir.join(MASK_FILE))?)?;
    for p in [&gt, &mask] {
        if (p.rows, p.cols) != (m, n) {
            return Err(Error::shape(&[m, n], &[p.rows, p.cols]));
        }
    }
    if mask.maxval != 1 {
        return Err(Error::Format("mask must have maxval 1".into()));
    }
    let mut sensitivities = Vec::with_capacity(coils);
    let mut kspace = Vec::with_capacity(coils * m * n);
    for i in 0..coils {
        for (name, sink) in [(sens_file(i), None), (kspace_file(i), Some(&mut kspace))] {
            let (r, c, data) = decode_cplx(&read(&dir.join(&name))?)?;
            if (r, c) != (m, n) {
                return Err(Error::shape(&[m, n], &[r, c]));
            }
            match sink {
                Some(k) => k.extend(data),
                None => sensitivities.push(data),
            }
        }
    }
    Ok(MriDataset {
        rows: m,
        cols: n,
        ground_truth: gt.values(),
        sensitivities,
        mask: mask.samples.iter().map(|&q| q as u8).collect(),
        kspace: Block::complex(&[coils, m, n], kspace)?,
        noise_sigma: meta_field(&meta, "sigma")?,
        seed: meta_field(&meta, "seed")?,
        mask_kind: meta.get("mask").and_then(|s| s.parse::<MaskKind>().ok()),
    })
}

/// Quality of a reconstruction against the ground truth, plus run facts.
#[derive(Clone, Debug, PartialEq)]
pub struct Metrics {
    pub snr_db: f64,
    pub psnr_db: f64,
    pub relerr: f64,
    pub iters: usize,
    pub cpu_s: f64,
}

/// Four-decimal rendering used for every reported metric.
pub fn fmt4(v: f64) -> String {
    if v.is_infinite() {
        if v > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{v:.4}")
    }
}

/// `(snr_db, psnr_db, relerr)` of the image in `recon` against the dataset's
/// ground truth, both decoded from their PGM files.
pub fn evaluate_files(recon: &Path, dataset: &Path) -> Result<(f64, f64, f64)> {
    let r = decode_pgm(&read(recon)?)?;
    let g = decode_pgm(&read(&dataset.join(GROUND_TRUTH_FILE))?)?;
    if (r.rows, r.cols) != (g.rows, g.cols) {
        return Err(Error::shape(&[g.rows, g.cols], &[r.rows, r.cols]));
    }
    let (u, u0) = (r.values(), g.values());
    Ok((snr(&u, &u0)?, psnr(&u, &u0)?, rel_err(&u, &u0)?))
}

pub fn write_metrics(path: &Path, m: &Metrics) -> Result<()> {
    let kv = [
        ("snr_db", fmt4(m.snr_db)),
        ("psnr_db", fmt4(m.psnr_db)),
        ("relerr", fmt4(m.relerr)),
        ("iters", m.iters.to_string()),
        ("cpu_s", format!("{:.3}", m.cpu_s)),
    ];
    write_file(path, encode_key_values(&kv).as_bytes())
}

pub fn write_image(path: &Path, rows: usize, cols: usize, values: &[f64]) -> Result<()> {
    write_file(path, &encode_pgm16(rows, cols, values)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mri::synth::{synthesize_dataset, SynthConfig};

    #[test]
    fn pgm_roundtrip_within_quantization() {
        let v: Vec<f64> = (0..12).map(|i| i as f64 * 0.37).collect();
        let p = decode_pgm(&encode_pgm16(3, 4, &v).unwrap()).unwrap();
        assert_eq!((p.rows, p.cols, p.maxval), (3, 4, 65535));
        let peak = 11.0 * 0.37;
        for (a, b) in p.values().iter().zip(&v) {
            assert!((a - b).abs() <= peak / 65535.0);
        }
        assert_eq!(*p.values().last().unwrap(), peak);
    }

    #[test]
    fn mask_and_cplx_roundtrip() {
        let mask = vec![1, 0, 0, 1, 1, 0];
        let p = decode_pgm(&encode_mask_pgm(2, 3, &mask).unwrap()).unwrap();
        assert_eq!(p.samples, vec![1, 0, 0, 1, 1, 0]);
        let data: Vec<C64> = (0..6).map(|i| C64::new(i as f64 / 3.0, -1e-300 * i as f64)).collect();
        let bytes = encode_cplx(2, 3, &data).unwrap();
        assert_eq!(bytes.len(), 16 + 96);
        assert_eq!(&bytes[..4], b"CPLX");
        assert_eq!(decode_cplx(&bytes).unwrap(), (2, 3, data));
        assert!(decode_cplx(&bytes[..20]).is_err());
    }

    #[test]
    fn malformed_inputs_are_rejected() {
        assert!(decode_pgm(b"P2\n1 1\n255\n0").is_err());
        assert!(decode_pgm(b"P5\n2 2\n255\n\x00").is_err());
        assert!(parse_key_values("novalue").is_err());
    }

    #[test]
    fn dataset_directory_roundtrip() {
        let d = synthesize_dataset(&SynthConfig {
            rows: 16,
            cols: 16,
            coils: 3,
            mask: MaskKind::Poisson(0.4),
            noise_sigma: 0.02,
            seed: 5,
        })
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_dataset(dir.path(), &d).unwrap();
        let back = read_dataset(dir.path()).unwrap();
        assert_eq!(back.sensitivities, d.sensitivities);
        assert_eq!(back.kspace, d.kspace);
        assert_eq!(back.mask, d.mask);
        assert_eq!(back.mask_kind, d.mask_kind);
        for (a, b) in back.ground_truth.iter().zip(&d.ground_truth) {
            assert!((a - b).abs() <= 1.0 / 65535.0);
        }
        let (s, p, r) = evaluate_files(&dir.path().join(GROUND_TRUTH_FILE), dir.path()).unwrap();
        assert_eq!((s, p, r), (f64::INFINITY, f64::INFINITY, 0.0));
    }
}
