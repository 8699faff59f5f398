use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Structural hyperparameters of the network.
///
/// The network has `2 * depth + 2` weight layers: the embedding convolution,
/// `depth` blocks of two convolutions, and the class head.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Feature maps produced by the embedding convolution.
    pub width: usize,
    /// Number of two-convolution blocks, each ending in a max pool.
    pub depth: usize,
    pub kernel: usize,
    /// EEG (plus optional EOG) input channels.
    pub in_channels: usize,
    pub n_classes: usize,
    /// Size of the auxiliary subject head; 0 disables it.
    pub n_subjects: usize,
    /// Sampling rate the model expects, kept for provenance.
    pub resample_hz: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    Within,
    Cross,
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "within" => Ok(Preset::Within),
            "cross" => Ok(Preset::Cross),
            other => Err(Error::config(format!("unknown preset {other:?}"))),
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Preset::Within => "within",
            Preset::Cross => "cross",
        })
    }
}

impl ModelConfig {
    /// Shipped defaults: shallow with long kernels for within-subject use,
    /// deeper with short kernels for cross-subject use.
    pub fn preset(preset: Preset, in_channels: usize, n_classes: usize) -> Self {
        match preset {
            Preset::Within => ModelConfig {
                width: 104,
                depth: 1,
                kernel: 15,
                in_channels,
                n_classes,
                n_subjects: 0,
                resample_hz: 80.0,
            },
            Preset::Cross => ModelConfig {
                width: 104,
                depth: 4,
                kernel: 6,
                in_channels,
                n_classes,
                n_subjects: 0,
                resample_hz: 70.0,
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.width < 1 {
            return Err(Error::config("width must be at least 1"));
        }
        if self.kernel < 1 {
            return Err(Error::config("kernel size must be at least 1"));
        }
        if self.in_channels < 1 {
            return Err(Error::config("in_channels must be at least 1"));
        }
        if self.n_classes < 2 {
            return Err(Error::config("n_classes must be at least 2"));
        }
        if self.depth > 24 {
            return Err(Error::config("depth above 24 is not supported"));
        }
        if !(self.resample_hz > 0.0) {
            return Err(Error::config("resample_hz must be positive"));
        }
        Ok(())
    }

    /// Feature maps after the embedding conv and after each block:
    /// `F_i = round(W * 2^(i/2))`, rounding half away from zero.
    pub fn channel_schedule(&self) -> Vec<usize> {
        (0..=self.depth)
            .map(|i| (self.width as f64 * 2f64.powf(i as f64 / 2.0)).round() as usize)
            .collect()
    }

    pub fn feature_dim(&self) -> usize {
        *self.channel_schedule().last().expect("schedule is never empty")
    }

    /// Convolutions plus the class head.
    pub fn layer_count(&self) -> usize {
        2 * self.depth + 2
    }

    /// Shortest input the pooling schedule accepts.
    pub fn min_length(&self) -> usize {
        1 << self.depth
    }

    /// `(in, out)` feature maps of every convolution in build order.
    pub fn conv_channels(&self) -> Vec<(usize, usize)> {
        let sched = self.channel_schedule();
        let mut out = vec![(self.in_channels, sched[0])];
        for i in 1..=self.depth {
            out.push((sched[i - 1], sched[i]));
            out.push((sched[i], sched[i]));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(width: usize, depth: usize) -> ModelConfig {
        ModelConfig {
            width,
            depth,
            kernel: 3,
            in_channels: 4,
            n_classes: 2,
            n_subjects: 0,
            resample_hz: 100.0,
        }
    }

    #[test]
    fn schedule_grows_by_sqrt2() {
        assert_eq!(cfg(64, 4).channel_schedule(), vec![64, 91, 128, 181, 256]);
    }

    #[test]
    fn layer_counts() {
        assert_eq!(cfg(8, 0).layer_count(), 2);
        assert_eq!(cfg(8, 0).conv_channels().len(), 1);
        // One block: embedding conv plus two convs.
        assert_eq!(cfg(8, 1).conv_channels().len(), 3);
        assert_eq!(cfg(8, 4).layer_count(), 10);
    }

    #[test]
    fn validation() {
        let mut c = cfg(8, 1);
        assert!(c.validate().is_ok());
        c.n_classes = 1;
        assert!(c.validate().is_err());
        assert!("nope".parse::<Preset>().is_err());
        assert_eq!("cross".parse::<Preset>().unwrap(), Preset::Cross);
    }
}
