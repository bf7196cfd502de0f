use std::io::{Read, Write};
use std::path::Path;

use crate::diffcore::Tensor;
use crate::error::{Error, Result};

pub const ADHC_MAGIC: &[u8; 4] = b"ADHC";
pub const ADHC_VERSION: u32 = 1;

/// Channel-major `C×T×D` frame embeddings.
#[derive(Clone, Debug, PartialEq)]
pub struct FrameTensor {
    c: usize,
    t: usize,
    d: usize,
    data: Vec<f64>,
}

impl FrameTensor {
    pub fn new(c: usize, t: usize, d: usize, data: Vec<f64>) -> Result<Self> {
        if c == 0 || t == 0 || d == 0 {
            return Err(Error::Dimension(format!("frame tensor {c}x{t}x{d} has an empty axis")));
        }
        if data.len() != c * t * d {
            return Err(Error::Dimension(format!(
                "frame tensor {c}x{t}x{d} needs {} values, got {}",
                c * t * d,
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("frame tensor".into()));
        }
        Ok(Self { c, t, d, data })
    }

    pub fn zeros(c: usize, t: usize, d: usize) -> Self {
        Self { c, t, d, data: vec![0.0; c * t * d] }
    }

    pub fn c(&self) -> usize {
        self.c
    }

    pub fn t(&self) -> usize {
        self.t
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    #[inline]
    fn offset(&self, c: usize, t: usize) -> usize {
        (c * self.t + t) * self.d
    }

    pub fn frame_vector(&self, c: usize, t: usize) -> &[f64] {
        let o = self.offset(c, t);
        &self.data[o..o + self.d]
    }

    pub fn frame_vector_mut(&mut self, c: usize, t: usize) -> &mut [f64] {
        let o = self.offset(c, t);
        let d = self.d;
        &mut self.data[o..o + d]
    }

    /// `T×D` slice of one channel.
    pub fn channel(&self, c: usize) -> Tensor {
        let o = self.offset(c, 0);
        Tensor::from_parts(vec![self.t, self.d], self.data[o..o + self.t * self.d].to_vec())
    }

    pub fn set_channel(&mut self, c: usize, slice: &Tensor) {
        let o = self.offset(c, 0);
        self.data[o..o + self.t * self.d].copy_from_slice(slice.data());
    }

    /// `C×D` slice of one frame.
    pub fn frame(&self, t: usize) -> Tensor {
        let mut out = Vec::with_capacity(self.c * self.d);
        for c in 0..self.c {
            out.extend_from_slice(self.frame_vector(c, t));
        }
        Tensor::from_parts(vec![self.c, self.d], out)
    }

    pub fn set_frame(&mut self, t: usize, slice: &Tensor) {
        for c in 0..self.c {
            self.frame_vector_mut(c, t).copy_from_slice(slice.row(c));
        }
    }

    /// Keeps channels `idx` in the given order.
    pub fn select_channels(&self, idx: &[usize]) -> Result<FrameTensor> {
        if idx.is_empty() {
            return Err(Error::Dimension("cannot select zero channels".into()));
        }
        let mut data = Vec::with_capacity(idx.len() * self.t * self.d);
        for &c in idx {
            if c >= self.c {
                return Err(Error::IndexOutOfRange { index: c, len: self.c });
            }
            let o = self.offset(c, 0);
            data.extend_from_slice(&self.data[o..o + self.t * self.d]);
        }
        Ok(FrameTensor { c: idx.len(), t: self.t, d: self.d, data })
    }

    /// Keeps frames `idx` in the given order.
    pub fn select_frames(&self, idx: &[usize]) -> Result<FrameTensor> {
        if idx.is_empty() {
            return Err(Error::Dimension("cannot select zero frames".into()));
        }
        let mut out = FrameTensor::zeros(self.c, idx.len(), self.d);
        for c in 0..self.c {
            for (k, &t) in idx.iter().enumerate() {
                if t >= self.t {
                    return Err(Error::IndexOutOfRange { index: t, len: self.t });
                }
                out.frame_vector_mut(c, k).copy_from_slice(self.frame_vector(c, t));
            }
        }
        Ok(out)
    }

    pub fn max_abs_diff(&self, other: &FrameTensor) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Binary feature file: magic, version, C, T, D as little-endian u32, then
    /// `C·T·D` little-endian f32 values, channel-major.
    pub fn write_adhc<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(ADHC_MAGIC)?;
        for v in [ADHC_VERSION, self.c as u32, self.t as u32, self.d as u32] {
            w.write_all(&v.to_le_bytes())?;
        }
        let mut buf = Vec::with_capacity(self.data.len() * 4);
        for &v in &self.data {
            buf.extend_from_slice(&(v as f32).to_le_bytes());
        }
        w.write_all(&buf)?;
        Ok(())
    }

    pub fn read_adhc<R: Read>(mut r: R) -> Result<FrameTensor> {
        let mut header = [0u8; 20];
        r.read_exact(&mut header)?;
        if &header[..4] != ADHC_MAGIC {
            return Err(Error::Data("feature file does not start with ADHC".into()));
        }
        let word = |i: usize| u32::from_le_bytes(header[4 + 4 * i..8 + 4 * i].try_into().unwrap());
        if word(0) != ADHC_VERSION {
            return Err(Error::Data(format!("unsupported feature file version {}", word(0))));
        }
        let (c, t, d) = (word(1) as usize, word(2) as usize, word(3) as usize);
        let n = c
            .checked_mul(t)
            .and_then(|v| v.checked_mul(d))
            .ok_or_else(|| Error::Data("feature dimensions overflow".into()))?;
        let mut raw = vec![0u8; n * 4];
        r.read_exact(&mut raw)?;
        let data = raw
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().unwrap()) as f64)
            .collect();
        FrameTensor::new(c, t, d, data)
    }

    pub fn load(path: &Path) -> Result<FrameTensor> {
        let f = std::fs::File::open(path)?;
        Self::read_adhc(std::io::BufReader::new(f))
    }

    pub fn to_adhc_bytes(&self) -> Vec<u8> {
        let mut v = Vec::new();
        self.write_adhc(&mut v).expect("writing to a Vec cannot fail");
        v
    }

    /// Rounds every value through `f32`, as a round trip through the feature file does.
    pub fn quantized_f32(&self) -> FrameTensor {
        FrameTensor {
            data: self.data.iter().map(|&v| v as f32 as f64).collect(),
            ..self.clone()
        }
    }
}
