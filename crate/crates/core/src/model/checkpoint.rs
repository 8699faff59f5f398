//! `ESCM` checkpoint files.
//!
//! Layout (little-endian):
//!
//! ```text
//! "ESCM" | u32 version=1
//! u32 width | u32 depth | u32 kernel | u32 in_channels | u32 n_classes | u32 n_subjects
//! f32 resample_hz | f32 bn_momentum | f32 bn_eps
//! u32 n_norms | n_norms x u8 (1 = running statistics present)
//! every parameter tensor as f32, in Model::params order
//! every norm layer: running mean then running var as f32 (zeros/ones when absent)
//! ```

use std::fs;
use std::path::Path;

use crate::error::{Error, FormatError, Result};
use crate::ops::{BatchNormState, NormMode, RunningStats};
use crate::tensor::{Scalar, Tensor};

use super::{Conv, Dense, Model, ModelConfig};

pub const CHECKPOINT_MAGIC: [u8; 4] = *b"ESCM";
pub const CHECKPOINT_VERSION: u32 = 1;

pub(crate) struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub(crate) fn new(buf: &'a [u8]) -> Self {
        Reader { buf, pos: 0 }
    }

    pub(crate) fn take(&mut self, n: usize) -> Result<&'a [u8], FormatError> {
        let end = self.pos.checked_add(n).ok_or(FormatError::Truncated)?;
        if end > self.buf.len() {
            return Err(FormatError::Truncated);
        }
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    pub(crate) fn u8(&mut self) -> Result<u8, FormatError> {
        Ok(self.take(1)?[0])
    }

    pub(crate) fn u16(&mut self) -> Result<u16, FormatError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().expect("2 bytes")))
    }

    pub(crate) fn u32(&mut self) -> Result<u32, FormatError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    pub(crate) fn f32(&mut self) -> Result<f32, FormatError> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    pub(crate) fn f32_vec(&mut self, n: usize) -> Result<Vec<f32>, FormatError> {
        let bytes = self.take(n.checked_mul(4).ok_or(FormatError::Truncated)?)?;
        Ok(bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect())
    }

    pub(crate) fn magic(&mut self, expected: [u8; 4]) -> Result<(), FormatError> {
        let found: [u8; 4] = self.take(4)?.try_into().expect("4 bytes");
        if found != expected {
            return Err(FormatError::BadMagic { expected, found });
        }
        Ok(())
    }

    pub(crate) fn finish(&self) -> Result<(), FormatError> {
        if self.pos != self.buf.len() {
            return Err(FormatError::TrailingBytes);
        }
        Ok(())
    }
}

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_f32(out: &mut Vec<u8>, v: f32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_values<F: Scalar>(out: &mut Vec<u8>, values: &[F]) {
    for &v in values {
        put_f32(out, v.as_f64() as f32);
    }
}

fn u32_of(v: usize, what: &str) -> Result<u32> {
    u32::try_from(v).map_err(|_| Error::config(format!("{what} does not fit in u32")))
}

impl<F: Scalar> Model<F> {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let cfg = self.config();
        let mut out = Vec::new();
        out.extend_from_slice(&CHECKPOINT_MAGIC);
        put_u32(&mut out, CHECKPOINT_VERSION);
        for (v, name) in [
            (cfg.width, "width"),
            (cfg.depth, "depth"),
            (cfg.kernel, "kernel"),
            (cfg.in_channels, "in_channels"),
            (cfg.n_classes, "n_classes"),
            (cfg.n_subjects, "n_subjects"),
        ] {
            put_u32(&mut out, u32_of(v, name)?);
        }
        put_f32(&mut out, cfg.resample_hz as f32);
        let first = &self.norms()[0];
        put_f32(&mut out, first.momentum.as_f64() as f32);
        put_f32(&mut out, first.eps.as_f64() as f32);
        put_u32(&mut out, u32_of(self.norms().len(), "norm count")?);
        for n in self.norms() {
            out.push(u8::from(n.running.is_some()));
        }
        for p in self.params() {
            put_values(&mut out, p.data());
        }
        for n in self.norms() {
            match &n.running {
                Some(rs) => {
                    put_values(&mut out, &rs.mean);
                    put_values(&mut out, &rs.var);
                }
                None => {
                    put_values(&mut out, &vec![F::zero(); n.channels()]);
                    put_values(&mut out, &vec![F::one(); n.channels()]);
                }
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        r.magic(CHECKPOINT_MAGIC)?;
        let version = r.u32()?;
        if version != CHECKPOINT_VERSION {
            return Err(FormatError::UnsupportedVersion(version).into());
        }
        let mut dims = [0usize; 6];
        for d in &mut dims {
            *d = r.u32()? as usize;
        }
        let config = ModelConfig {
            width: dims[0],
            depth: dims[1],
            kernel: dims[2],
            in_channels: dims[3],
            n_classes: dims[4],
            n_subjects: dims[5],
            resample_hz: r.f32()? as f64,
        };
        config
            .validate()
            .map_err(|e| FormatError::Invalid(format!("stored config: {e}")))?;
        let momentum = F::lit(r.f32()? as f64);
        let eps = F::lit(r.f32()? as f64);
        let conv_channels = config.conv_channels();
        let n_norms = r.u32()? as usize;
        if n_norms != conv_channels.len() {
            return Err(FormatError::Invalid(format!(
                "{n_norms} norm layers stored, config implies {}",
                conv_channels.len()
            ))
            .into());
        }
        let mut present = Vec::with_capacity(n_norms);
        for _ in 0..n_norms {
            present.push(r.u8()? != 0);
        }
        let tensor = |r: &mut Reader, shape: &[usize]| -> Result<Tensor<F>> {
            let n = shape.iter().product();
            let data = r.f32_vec(n)?.into_iter().map(|v| F::lit(v as f64)).collect();
            Tensor::from_vec(shape, data)
        };
        let s = config.kernel;
        let mut convs = Vec::new();
        let mut norms = Vec::new();
        for &(cin, cout) in &conv_channels {
            convs.push(Conv {
                weight: tensor(&mut r, &[cout, cin, s])?,
                bias: tensor(&mut r, &[cout])?,
            });
            norms.push(BatchNormState {
                gamma: tensor(&mut r, &[cout])?,
                beta: tensor(&mut r, &[cout])?,
                running: None,
                momentum,
                eps,
                mode: NormMode::Eval,
            });
        }
        let feat = config.feature_dim();
        let head = Dense {
            weight: tensor(&mut r, &[config.n_classes, feat])?,
            bias: tensor(&mut r, &[config.n_classes])?,
        };
        let subject_head = if config.n_subjects > 0 {
            Some(Dense {
                weight: tensor(&mut r, &[config.n_subjects, feat])?,
                bias: tensor(&mut r, &[config.n_subjects])?,
            })
        } else {
            None
        };
        for (norm, &has) in norms.iter_mut().zip(&present) {
            let c = norm.channels();
            let mean: Vec<F> = r.f32_vec(c)?.into_iter().map(|v| F::lit(v as f64)).collect();
            let var: Vec<F> = r.f32_vec(c)?.into_iter().map(|v| F::lit(v as f64)).collect();
            if has {
                norm.running = Some(RunningStats { mean, var });
            }
        }
        r.finish()?;
        Ok(Model::from_parts(config, convs, norms, head, subject_head))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_bytes()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}
