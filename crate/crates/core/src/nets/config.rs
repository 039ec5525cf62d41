use downscale_autograd::PadMode;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Padding {
    Zero,
    Reflect,
    Circular,
}

impl Padding {
    pub fn mode(self) -> PadMode {
        match self {
            Padding::Zero => PadMode::Zero,
            Padding::Reflect => PadMode::Reflect,
            Padding::Circular => PadMode::Circular,
        }
    }
}

/// Sizes of the generator and discriminator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkConfig {
    pub vars: usize,
    /// Noise channels per time step; 0 gives a deterministic network.
    pub noise_channels: usize,
    /// Channels of the generator encoders and of its recurrent state.
    pub gen_width: usize,
    pub gen_encoder_blocks: usize,
    /// One width per decoder residual block: `upsampling_stages + 1` entries.
    pub gen_decoder_widths: Vec<usize>,
    /// Widths of the discriminator encoder blocks, one per upsampling stage.
    pub disc_encoder_widths: Vec<usize>,
    /// Channels of the joint blocks and of the discriminator's recurrent state.
    pub disc_width: usize,
    pub disc_joint_blocks: usize,
    pub disc_fc_width: usize,
    pub kernel_size: usize,
    pub upsampling_stages: usize,
    pub leaky_slope: f32,
    pub padding: Padding,
}

impl NetworkConfig {
    /// Small enough for unit tests and CPU training runs.
    pub fn tiny() -> Self {
        Self {
            vars: 1,
            noise_channels: 4,
            gen_width: 24,
            gen_encoder_blocks: 3,
            gen_decoder_widths: vec![24, 16, 16, 8, 8],
            disc_encoder_widths: vec![8, 12, 16, 24],
            disc_width: 24,
            disc_joint_blocks: 2,
            disc_fc_width: 24,
            kernel_size: 3,
            upsampling_stages: 4,
            leaky_slope: 0.2,
            padding: Padding::Reflect,
        }
    }

    pub fn desk() -> Self {
        Self {
            noise_channels: 8,
            gen_width: 64,
            gen_decoder_widths: vec![64, 48, 32, 16, 16],
            disc_encoder_widths: vec![16, 32, 48, 64],
            disc_width: 64,
            disc_fc_width: 64,
            ..Self::tiny()
        }
    }

    /// Widths chosen to land near the published parameter totals.
    pub fn reference() -> Self {
        Self {
            noise_channels: 8,
            gen_width: 256,
            gen_decoder_widths: vec![256, 256, 128, 64, 32],
            disc_encoder_widths: vec![64, 128, 256, 256],
            disc_width: 256,
            disc_fc_width: 256,
            ..Self::tiny()
        }
    }

    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "tiny" => Some(Self::tiny()),
            "desk" => Some(Self::desk()),
            "reference" => Some(Self::reference()),
            _ => None,
        }
    }

    pub fn factor(&self) -> usize {
        1 << self.upsampling_stages
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.upsampling_stages;
        if self.gen_decoder_widths.len() != n + 1 {
            return Err(Error::Config(format!(
                "{} decoder widths for {} upsampling stages (need {})",
                self.gen_decoder_widths.len(),
                n,
                n + 1
            )));
        }
        if self.disc_encoder_widths.len() != n {
            return Err(Error::Config(format!(
                "{} discriminator encoder widths for {n} upsampling stages",
                self.disc_encoder_widths.len()
            )));
        }
        let widths = [self.vars, self.gen_width, self.disc_width, self.disc_fc_width];
        if widths
            .iter()
            .chain(&self.gen_decoder_widths)
            .chain(&self.disc_encoder_widths)
            .any(|&w| w == 0)
        {
            return Err(Error::Config("all widths must be at least 1".into()));
        }
        if self.kernel_size % 2 == 0 {
            return Err(Error::Config("kernel size must be odd".into()));
        }
        if !(self.leaky_slope >= 0.0 && self.leaky_slope < 1.0) {
            return Err(Error::Config("leaky slope outside [0, 1)".into()));
        }
        Ok(())
    }

    /// Hex SHA-256 of the canonical JSON form; weight files carry it.
    pub fn fingerprint(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }
}
