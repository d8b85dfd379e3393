//! File formats and fixtures: binary PGM images, IDX datasets, the AMTF
//! tensor container for moment matrices, CSV emission, and seeded
//! synthetic images.
//!
//! AMTF layout (all integers little-endian): magic `AMTF`, u32 version
//! (1), u32 dtype code (1 = f64 little-endian), u32 ndim, ndim x u64
//! dims, then the row-major payload. Round trips are bit-exact.
//! IDX files are big-endian per the external MNIST convention.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::Rng;

use crate::distribution::seeded_rng;
use crate::error::{Error, Result};
use crate::grid::{Grid, Image};
use crate::num::Scalar;

const AMTF_MAGIC: &[u8; 4] = b"AMTF";
const AMTF_VERSION: u32 = 1;
const AMTF_DTYPE_F64: u32 = 1;

/// Labeled image dataset with one-hot targets derivable on demand.
#[derive(Debug, Clone)]
pub struct LabeledDataset<F> {
    images: Vec<Image<F>>,
    labels: Vec<usize>,
    num_classes: usize,
}

impl<F: Scalar> LabeledDataset<F> {
    pub fn new(images: Vec<Image<F>>, labels: Vec<usize>, num_classes: usize) -> Result<Self> {
        if images.len() != labels.len() {
            return Err(Error::Shape(format!(
                "{} images but {} labels",
                images.len(),
                labels.len()
            )));
        }
        if images.is_empty() {
            return Err(Error::Argument("dataset is empty".into()));
        }
        if num_classes == 0 || labels.iter().any(|&l| l >= num_classes) {
            return Err(Error::Range(format!(
                "labels must lie in 0..{num_classes}"
            )));
        }
        let grid = images[0].grid();
        if images.iter().any(|im| im.grid() != grid) {
            return Err(Error::Shape("images do not share a grid".into()));
        }
        Ok(LabeledDataset {
            images,
            labels,
            num_classes,
        })
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn grid(&self) -> Grid {
        self.images[0].grid()
    }

    pub fn images(&self) -> &[Image<F>] {
        &self.images
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    /// One-hot target for sample n.
    pub fn one_hot(&self, n: usize) -> Vec<F> {
        let mut y = vec![F::zero(); self.num_classes];
        y[self.labels[n]] = F::one();
        y
    }

    /// Contiguous subset [start, start+len).
    pub fn slice(&self, start: usize, len: usize) -> Result<Self> {
        if start + len > self.len() || len == 0 {
            return Err(Error::Range(format!(
                "slice {start}..{} out of {} samples",
                start + len,
                self.len()
            )));
        }
        LabeledDataset::new(
            self.images[start..start + len].to_vec(),
            self.labels[start..start + len].to_vec(),
            self.num_classes,
        )
    }
}

fn open(path: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(File::open(path).map_err(|e| {
        Error::Io(std::io::Error::new(
            e.kind(),
            format!("{}: {e}", path.display()),
        ))
    })?))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).map_err(|e| {
        Error::Io(std::io::Error::new(
            e.kind(),
            format!("{}: {e}", path.display()),
        ))
    })?))
}

fn read_exact(r: &mut impl Read, buf: &mut [u8], what: &str) -> Result<()> {
    r.read_exact(buf)
        .map_err(|_| Error::Format(format!("truncated file while reading {what}")))
}

// ---------------------------------------------------------------- PGM --

/// Reads a binary (P5) PGM with maxval 255; intensities scale to [0,1].
pub fn read_pgm<F: Scalar>(path: impl AsRef<Path>) -> Result<Image<F>> {
    let mut r = open(path.as_ref())?;
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    if bytes.len() < 2 {
        return Err(Error::Format("PGM file too short for a magic number".into()));
    }
    if &bytes[..2] == b"P2" {
        return Err(Error::Format(
            "ASCII PGM (P2) is not supported; convert to binary P5".into(),
        ));
    }
    if &bytes[..2] != b"P5" {
        return Err(Error::Format(format!(
            "bad PGM magic {:?}, expected P5",
            &bytes[..2.min(bytes.len())]
        )));
    }
    // header tokens separated by whitespace, with '#' comments
    let mut pos = 2usize;
    let mut token = || -> Result<usize> {
        loop {
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if pos < bytes.len() && bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
                continue;
            }
            break;
        }
        let start = pos;
        while pos < bytes.len() && bytes[pos].is_ascii_digit() {
            pos += 1;
        }
        if pos == start {
            return Err(Error::Format("missing numeric field in PGM header".into()));
        }
        std::str::from_utf8(&bytes[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::Format("bad numeric field in PGM header".into()))
    };
    let width = token()?;
    let height = token()?;
    let maxval = token()?;
    if maxval != 255 {
        return Err(Error::Format(format!(
            "unsupported PGM maxval {maxval}, expected 255"
        )));
    }
    // exactly one whitespace byte separates header and payload
    if pos >= bytes.len() || !bytes[pos].is_ascii_whitespace() {
        return Err(Error::Format("missing separator before PGM payload".into()));
    }
    pos += 1;
    let grid = Grid::new(height, width)?;
    let need = grid.dim();
    let payload = &bytes[pos..];
    if payload.len() < need {
        return Err(Error::Format(format!(
            "PGM payload has {} bytes, expected {need}",
            payload.len()
        )));
    }
    let data = payload[..need]
        .iter()
        .map(|&b| F::of(b as f64 / 255.0))
        .collect();
    Image::new(grid, data)
}

/// Writes a binary (P5) PGM, quantizing [0,1] intensities to 0..255.
pub fn write_pgm<F: Scalar>(path: impl AsRef<Path>, img: &Image<F>) -> Result<()> {
    let mut w = create(path.as_ref())?;
    let grid = img.grid();
    write!(w, "P5\n{} {}\n255\n", grid.width(), grid.height())?;
    let bytes: Vec<u8> = img
        .data()
        .iter()
        .map(|&v| {
            let q = (v.as_f64() * 255.0).round();
            q.clamp(0.0, 255.0) as u8
        })
        .collect();
    w.write_all(&bytes)?;
    w.flush()?;
    Ok(())
}

// ---------------------------------------------------------------- IDX --

fn be_u32(r: &mut impl Read, what: &str) -> Result<u32> {
    let mut b = [0u8; 4];
    read_exact(r, &mut b, what)?;
    Ok(u32::from_be_bytes(b))
}

/// Reads an MNIST-layout IDX image/label file pair.
pub fn read_idx<F: Scalar>(
    images_path: impl AsRef<Path>,
    labels_path: impl AsRef<Path>,
    num_classes: usize,
) -> Result<LabeledDataset<F>> {
    let mut ir = open(images_path.as_ref())?;
    let magic = be_u32(&mut ir, "image magic")?;
    if magic != 0x0000_0803 {
        return Err(Error::Format(format!(
            "bad IDX image magic {magic:#010x}, expected 0x00000803"
        )));
    }
    let n = be_u32(&mut ir, "image count")? as usize;
    let h = be_u32(&mut ir, "image height")? as usize;
    let w = be_u32(&mut ir, "image width")? as usize;
    let grid = Grid::new(h, w)?;
    let mut raw = vec![0u8; n * grid.dim()];
    read_exact(&mut ir, &mut raw, "image payload")?;

    let mut lr = open(labels_path.as_ref())?;
    let magic = be_u32(&mut lr, "label magic")?;
    if magic != 0x0000_0801 {
        return Err(Error::Format(format!(
            "bad IDX label magic {magic:#010x}, expected 0x00000801"
        )));
    }
    let ln = be_u32(&mut lr, "label count")? as usize;
    if ln != n {
        return Err(Error::Format(format!(
            "IDX count mismatch: {n} images vs {ln} labels"
        )));
    }
    let mut labels_raw = vec![0u8; n];
    read_exact(&mut lr, &mut labels_raw, "label payload")?;

    let images = raw
        .chunks_exact(grid.dim())
        .map(|chunk| {
            Image::new(
                grid,
                chunk.iter().map(|&b| F::of(b as f64 / 255.0)).collect(),
            )
        })
        .collect::<Result<Vec<_>>>()?;
    let labels = labels_raw.iter().map(|&b| b as usize).collect();
    LabeledDataset::new(images, labels, num_classes)
}

/// Writes a dataset as an MNIST-layout IDX image/label file pair,
/// quantizing intensities to bytes.
pub fn write_idx<F: Scalar>(
    images_path: impl AsRef<Path>,
    labels_path: impl AsRef<Path>,
    data: &LabeledDataset<F>,
) -> Result<()> {
    let grid = data.grid();
    let mut iw = create(images_path.as_ref())?;
    iw.write_all(&0x0000_0803u32.to_be_bytes())?;
    iw.write_all(&(data.len() as u32).to_be_bytes())?;
    iw.write_all(&(grid.height() as u32).to_be_bytes())?;
    iw.write_all(&(grid.width() as u32).to_be_bytes())?;
    for img in data.images() {
        let bytes: Vec<u8> = img
            .data()
            .iter()
            .map(|&v| (v.as_f64() * 255.0).round().clamp(0.0, 255.0) as u8)
            .collect();
        iw.write_all(&bytes)?;
    }
    iw.flush()?;

    let mut lw = create(labels_path.as_ref())?;
    lw.write_all(&0x0000_0801u32.to_be_bytes())?;
    lw.write_all(&(data.len() as u32).to_be_bytes())?;
    let labels: Vec<u8> = data.labels().iter().map(|&l| l as u8).collect();
    lw.write_all(&labels)?;
    lw.flush()?;
    Ok(())
}

// --------------------------------------------------------------- AMTF --

/// Writes a row-major f64 tensor in the AMTF container.
pub fn write_tensor(path: impl AsRef<Path>, dims: &[u64], data: &[f64]) -> Result<()> {
    let expect: u64 = dims.iter().product();
    if expect != data.len() as u64 {
        return Err(Error::Shape(format!(
            "dims {:?} imply {expect} values, got {}",
            dims,
            data.len()
        )));
    }
    let mut w = create(path.as_ref())?;
    w.write_all(AMTF_MAGIC)?;
    w.write_all(&AMTF_VERSION.to_le_bytes())?;
    w.write_all(&AMTF_DTYPE_F64.to_le_bytes())?;
    w.write_all(&(dims.len() as u32).to_le_bytes())?;
    for &d in dims {
        w.write_all(&d.to_le_bytes())?;
    }
    for &v in data {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

/// Reads an AMTF tensor back as (dims, row-major values).
pub fn read_tensor(path: impl AsRef<Path>) -> Result<(Vec<u64>, Vec<f64>)> {
    let mut r = open(path.as_ref())?;
    let mut magic = [0u8; 4];
    read_exact(&mut r, &mut magic, "magic")?;
    if &magic != AMTF_MAGIC {
        return Err(Error::Format(format!(
            "bad tensor magic {magic:?} at offset 0, expected {AMTF_MAGIC:?}"
        )));
    }
    let le_u32 = |what: &str, r: &mut BufReader<File>| -> Result<u32> {
        let mut b = [0u8; 4];
        read_exact(r, &mut b, what)?;
        Ok(u32::from_le_bytes(b))
    };
    let version = le_u32("version", &mut r)?;
    if version != AMTF_VERSION {
        return Err(Error::Format(format!(
            "unsupported tensor version {version}, expected {AMTF_VERSION}"
        )));
    }
    let dtype = le_u32("dtype", &mut r)?;
    if dtype != AMTF_DTYPE_F64 {
        return Err(Error::Format(format!(
            "unsupported tensor dtype code {dtype}, expected {AMTF_DTYPE_F64}"
        )));
    }
    let ndim = le_u32("ndim", &mut r)? as usize;
    let mut dims = Vec::with_capacity(ndim);
    for k in 0..ndim {
        let mut b = [0u8; 8];
        read_exact(&mut r, &mut b, &format!("dimension {k}"))?;
        dims.push(u64::from_le_bytes(b));
    }
    let count: u64 = dims.iter().product();
    let mut payload = vec![0u8; (count as usize) * 8];
    read_exact(&mut r, &mut payload, "payload")?;
    let mut trailing = [0u8; 1];
    if r.read(&mut trailing)? != 0 {
        return Err(Error::Format("trailing bytes after tensor payload".into()));
    }
    let data = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok((dims, data))
}

// ---------------------------------------------------------------- CSV --

/// Writes a CSV file: header row plus preformatted data rows, LF endings.
pub fn write_csv(path: impl AsRef<Path>, header: &str, rows: &[String]) -> Result<()> {
    let mut w = create(path.as_ref())?;
    writeln!(w, "{header}")?;
    for row in rows {
        writeln!(w, "{row}")?;
    }
    w.flush()?;
    Ok(())
}

// ----------------------------------------------------------- fixtures --

/// Seeded natural-texture stand-in: white noise convolved with a
/// separable binomial low-pass kernel of width ceil(1/cutoff), min-max
/// normalized to [0,1].
pub fn synth_image<F: Scalar>(grid: Grid, seed: u64, cutoff: f64) -> Result<Image<F>> {
    if !(cutoff > 0.0 && cutoff <= 1.0) {
        return Err(Error::Argument(format!(
            "cutoff must lie in (0, 1], got {cutoff}"
        )));
    }
    let mut rng = seeded_rng(seed);
    let noise: Vec<f64> = (0..grid.dim()).map(|_| rng.gen::<f64>()).collect();

    let width = (1.0 / cutoff).ceil() as usize;
    // binomial row: C(width-1, k), the discrete Gaussian surrogate
    let mut kernel = vec![1.0f64];
    for _ in 1..width {
        let mut next = vec![0.0; kernel.len() + 1];
        for (i, &v) in kernel.iter().enumerate() {
            next[i] += v;
            next[i + 1] += v;
        }
        kernel = next;
    }

    let (h, w) = (grid.height(), grid.width());
    let offset = (kernel.len() / 2) as i64;
    // renormalized separable convolution (kernel mass clipped at borders
    // is excluded from the divisor)
    let conv_line = |line: &[f64]| -> Vec<f64> {
        (0..line.len() as i64)
            .map(|i| {
                let mut acc = 0.0;
                let mut mass = 0.0;
                for (k, &kv) in kernel.iter().enumerate() {
                    let src = i + k as i64 - offset;
                    if src >= 0 && (src as usize) < line.len() {
                        acc += kv * line[src as usize];
                        mass += kv;
                    }
                }
                acc / mass
            })
            .collect()
    };
    let mut tmp = vec![0.0f64; grid.dim()];
    for i in 0..h {
        let row: Vec<f64> = (0..w).map(|j| noise[i * w + j]).collect();
        let out = conv_line(&row);
        tmp[i * w..(i + 1) * w].copy_from_slice(&out);
    }
    let mut smooth = vec![0.0f64; grid.dim()];
    for j in 0..w {
        let col: Vec<f64> = (0..h).map(|i| tmp[i * w + j]).collect();
        let out = conv_line(&col);
        for i in 0..h {
            smooth[i * w + j] = out[i];
        }
    }

    let lo = smooth.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = smooth.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let span = if hi > lo { hi - lo } else { 1.0 };
    Image::new(
        grid,
        smooth.iter().map(|&v| F::of((v - lo) / span)).collect(),
    )
}

/// Seeded 10-class glyph dataset: each class is a fixed low-pass template
/// and each sample adds fresh noise. A linear one-hot regressor separates
/// the classes well, which is all the training experiments need.
pub fn synth_digits<F: Scalar>(grid: Grid, n: usize, seed: u64) -> Result<LabeledDataset<F>> {
    if n == 0 {
        return Err(Error::Argument("dataset size must be positive".into()));
    }
    let templates: Vec<Image<f64>> = (0..10)
        .map(|c| synth_image(grid, 0x7E4D_0000 + c as u64, 0.2))
        .collect::<Result<_>>()?;
    let mut rng = seeded_rng(seed);
    let mut images = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let label = rng.gen_range(0..10usize);
        let t = &templates[label];
        let data = t
            .data()
            .iter()
            .map(|&v| {
                let noise: f64 = rng.gen();
                F::of(0.75 * v + 0.25 * noise)
            })
            .collect();
        images.push(Image::new(grid, data)?);
        labels.push(label);
    }
    LabeledDataset::new(images, labels, 10)
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    #[test]
    fn pgm_single_pixel() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("one.pgm");
        std::fs::write(&path, b"P5\n1 1\n255\n\xff").unwrap();
        let img = read_pgm::<f64>(&path).unwrap();
        assert_eq!(img.grid().dim(), 1);
        assert_eq!(img.data()[0], 1.0);
    }

    #[test]
    fn pgm_round_trip_within_quantization() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("rt.pgm");
        let grid = Grid::new(9, 13).unwrap();
        let img = synth_image::<f64>(grid, 3, 0.4).unwrap();
        write_pgm(&path, &img).unwrap();
        let back = read_pgm::<f64>(&path).unwrap();
        assert_eq!(back.grid(), grid);
        assert!(back.max_abs_diff(&img) <= 1.0 / 255.0 + 1e-12);
    }

    #[test]
    fn pgm_rejects_ascii_and_garbage() {
        let dir = tempdir().unwrap();
        let p2 = dir.path().join("a.pgm");
        std::fs::write(&p2, b"P2\n1 1\n255\n255\n").unwrap();
        let err = read_pgm::<f64>(&p2).unwrap_err().to_string();
        assert!(err.contains("P2"), "unexpected message: {err}");

        let junk = dir.path().join("b.pgm");
        std::fs::write(&junk, b"JUNKJUNK").unwrap();
        assert!(read_pgm::<f64>(&junk).is_err());

        let short = dir.path().join("c.pgm");
        std::fs::write(&short, b"P5\n4 4\n255\n\x01\x02").unwrap();
        assert!(read_pgm::<f64>(&short).is_err());
    }

    #[test]
    fn pgm_handles_comments() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("c.pgm");
        std::fs::write(&path, b"P5\n# a comment\n2 1\n255\n\x00\x80").unwrap();
        let img = read_pgm::<f64>(&path).unwrap();
        assert_eq!(img.grid().width(), 2);
        assert!((img.data()[1] - 128.0 / 255.0).abs() < 1e-12);
    }

    #[test]
    fn idx_byte_level_fixture() {
        let dir = tempdir().unwrap();
        let ip = dir.path().join("imgs.idx");
        let lp = dir.path().join("lbls.idx");
        // 2 images of 2x3, pixel k of image i = 10*i + k
        let mut ibytes = Vec::new();
        ibytes.extend_from_slice(&0x0000_0803u32.to_be_bytes());
        ibytes.extend_from_slice(&2u32.to_be_bytes());
        ibytes.extend_from_slice(&2u32.to_be_bytes());
        ibytes.extend_from_slice(&3u32.to_be_bytes());
        for i in 0..2u8 {
            for k in 0..6u8 {
                ibytes.push(10 * i + k);
            }
        }
        std::fs::write(&ip, &ibytes).unwrap();
        let mut lbytes = Vec::new();
        lbytes.extend_from_slice(&0x0000_0801u32.to_be_bytes());
        lbytes.extend_from_slice(&2u32.to_be_bytes());
        lbytes.extend_from_slice(&[7u8, 3u8]);
        std::fs::write(&lp, &lbytes).unwrap();

        let ds = read_idx::<f64>(&ip, &lp, 10).unwrap();
        assert_eq!(ds.len(), 2);
        assert_eq!(ds.grid().height(), 2);
        assert_eq!(ds.grid().width(), 3);
        assert_eq!(ds.labels(), &[7, 3]);
        assert!((ds.images()[1].get(0, 2) - 12.0 / 255.0).abs() < 1e-12);
        let y = ds.one_hot(0);
        assert_eq!(y[7], 1.0);
        assert_eq!(y.iter().sum::<f64>(), 1.0);
    }

    #[test]
    fn idx_rejects_mismatch_and_truncation() {
        let dir = tempdir().unwrap();
        let ip = dir.path().join("i.idx");
        let lp = dir.path().join("l.idx");
        let mut ibytes = Vec::new();
        ibytes.extend_from_slice(&0x0000_0803u32.to_be_bytes());
        ibytes.extend_from_slice(&1u32.to_be_bytes());
        ibytes.extend_from_slice(&1u32.to_be_bytes());
        ibytes.extend_from_slice(&1u32.to_be_bytes());
        ibytes.push(0);
        std::fs::write(&ip, &ibytes).unwrap();
        // two labels for one image
        let mut lbytes = Vec::new();
        lbytes.extend_from_slice(&0x0000_0801u32.to_be_bytes());
        lbytes.extend_from_slice(&2u32.to_be_bytes());
        lbytes.extend_from_slice(&[0u8, 1u8]);
        std::fs::write(&lp, &lbytes).unwrap();
        assert!(read_idx::<f64>(&ip, &lp, 10).is_err());

        std::fs::write(&lp, b"").unwrap();
        assert!(read_idx::<f64>(&ip, &lp, 10).is_err());
    }

    #[test]
    fn idx_write_read_round_trip() {
        let dir = tempdir().unwrap();
        let grid = Grid::new(7, 7).unwrap();
        let ds = synth_digits::<f64>(grid, 12, 5).unwrap();
        let ip = dir.path().join("imgs.idx");
        let lp = dir.path().join("lbls.idx");
        write_idx(&ip, &lp, &ds).unwrap();
        let back = read_idx::<f64>(&ip, &lp, 10).unwrap();
        assert_eq!(back.len(), 12);
        assert_eq!(back.labels(), ds.labels());
        for (a, b) in back.images().iter().zip(ds.images()) {
            assert!(a.max_abs_diff(b) <= 1.0 / 255.0 + 1e-12);
        }
    }

    #[test]
    fn tensor_scalar_file_layout() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("s.amtf");
        write_tensor(&path, &[1], &[3.5]).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        assert_eq!(bytes.len(), 4 + 4 + 4 + 4 + 8 + 8);
        let (dims, data) = read_tensor(&path).unwrap();
        assert_eq!(dims, vec![1]);
        assert_eq!(data, vec![3.5]);
    }

    #[test]
    fn tensor_round_trip_bit_exact() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("t.amtf");
        let data: Vec<f64> = (0..60)
            .map(|k| (k as f64).sin() * 1e-3 + f64::EPSILON * k as f64)
            .collect();
        write_tensor(&path, &[3, 4, 5], &data).unwrap();
        let (dims, back) = read_tensor(&path).unwrap();
        assert_eq!(dims, vec![3, 4, 5]);
        assert_eq!(back.len(), data.len());
        for (a, b) in back.iter().zip(&data) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn tensor_rejects_corruption() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("t.amtf");
        write_tensor(&path, &[2], &[1.0, 2.0]).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes[0] = b'X';
        std::fs::write(&path, &bytes).unwrap();
        let err = read_tensor(&path).unwrap_err().to_string();
        assert!(err.contains("offset 0"), "message: {err}");

        assert!(write_tensor(dir.path().join("bad.amtf"), &[3], &[1.0]).is_err());
    }

    #[test]
    fn synth_image_deterministic_and_normalized() {
        let grid = Grid::new(16, 16).unwrap();
        let a = synth_image::<f64>(grid, 9, 0.3).unwrap();
        let b = synth_image::<f64>(grid, 9, 0.3).unwrap();
        assert_eq!(a.data(), b.data());
        let lo = a.data().iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = a.data().iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(lo, 0.0);
        assert_eq!(hi, 1.0);
        assert!(synth_image::<f64>(grid, 9, 0.0).is_err());
    }

    #[test]
    fn synth_image_cutoff_one_is_nearly_white() {
        let grid = Grid::new(48, 48).unwrap();
        let img = synth_image::<f64>(grid, 11, 1.0).unwrap();
        // lag-1 horizontal autocorrelation of white noise is near zero
        let data = img.data();
        let n = data.len();
        let mean = data.iter().sum::<f64>() / n as f64;
        let var = data.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
        let mut cov = 0.0;
        let mut count = 0;
        for i in 0..48 {
            for j in 0..47 {
                cov += (img.get(i, j) - mean) * (img.get(i, j + 1) - mean);
                count += 1;
            }
        }
        cov /= count as f64;
        assert!((cov / var).abs() < 0.2, "autocorrelation {}", cov / var);
    }

    #[test]
    fn csv_layout() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("x.csv");
        write_csv(&path, "a,b", &["1,2".to_string(), "3,4".to_string()]).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text, "a,b\n1,2\n3,4\n");
    }

    #[test]
    fn dataset_validation() {
        let grid = Grid::new(2, 2).unwrap();
        let img = Image::<f64>::zeros(grid);
        assert!(LabeledDataset::new(vec![img.clone()], vec![3], 3).is_err());
        assert!(LabeledDataset::new(vec![img.clone()], vec![0, 1], 3).is_err());
        let ds = LabeledDataset::new(vec![img.clone(), img], vec![0, 2], 3).unwrap();
        assert_eq!(ds.slice(1, 1).unwrap().labels(), &[2]);
        assert!(ds.slice(1, 2).is_err());
    }
}
