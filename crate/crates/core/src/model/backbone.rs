use rand::Rng;

use super::batch::Batch;
use crate::autodiff::{DropoutMode, Graph, Linear, Lstm, ParameterStore, Var};
use crate::config::KeyValues;
use crate::error::{Error, Result};

/// Layer sizes shared by the driving and hazard networks.
#[derive(Debug, Clone, PartialEq)]
pub struct Arch {
    pub obs_dim: usize,
    pub k: usize,
    pub enc_hidden: usize,
    pub enc_out: usize,
    pub vis_hidden: usize,
    pub speed_hidden: usize,
    pub angle_hidden: usize,
    pub head_hidden: usize,
    pub dropout: f64,
}

impl Default for Arch {
    fn default() -> Self {
        Arch {
            obs_dim: crate::data::types::DEFAULT_OBS_DIM,
            k: crate::data::types::DEFAULT_K,
            enc_hidden: 64,
            enc_out: 32,
            vis_hidden: 32,
            speed_hidden: 8,
            angle_hidden: 8,
            head_hidden: 32,
            dropout: 0.1,
        }
    }
}

impl Arch {
    /// Every hidden width set to `w`; used for gradient checks.
    pub fn uniform_width(obs_dim: usize, k: usize, w: usize, dropout: f64) -> Self {
        Arch {
            obs_dim,
            k,
            enc_hidden: w,
            enc_out: w,
            vis_hidden: w,
            speed_hidden: w,
            angle_hidden: w,
            head_hidden: w,
            dropout,
        }
    }

    pub fn fused_dim(&self) -> usize {
        self.vis_hidden + self.speed_hidden + self.angle_hidden
    }

    pub fn validate(&self) -> Result<()> {
        let widths = [
            self.obs_dim,
            self.k,
            self.enc_hidden,
            self.enc_out,
            self.vis_hidden,
            self.speed_hidden,
            self.angle_hidden,
            self.head_hidden,
        ];
        if widths.contains(&0) {
            return Err(Error::validation("architecture widths and k must be positive"));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::validation("dropout must lie in [0, 1)"));
        }
        Ok(())
    }

    pub fn to_line(&self) -> String {
        format!(
            "arch obs_dim={} k={} enc_hidden={} enc_out={} vis_hidden={} speed_hidden={} angle_hidden={} head_hidden={} dropout={}",
            self.obs_dim,
            self.k,
            self.enc_hidden,
            self.enc_out,
            self.vis_hidden,
            self.speed_hidden,
            self.angle_hidden,
            self.head_hidden,
            self.dropout
        )
    }

    pub fn parse_line(line: &str) -> Result<Self> {
        let rest = line
            .strip_prefix("arch ")
            .ok_or_else(|| Error::parse("checkpoint", "expected `arch` line"))?;
        let text: String = rest
            .split_whitespace()
            .map(|kv| kv.replacen('=', " = ", 1) + "\n")
            .collect();
        let kv = KeyValues::parse(&text, "checkpoint arch")?;
        let need = |key: &str| -> Result<usize> {
            kv.get::<usize>(None, key)?
                .ok_or_else(|| Error::parse("checkpoint", format!("arch lacks {key}")))
        };
        let arch = Arch {
            obs_dim: need("obs_dim")?,
            k: need("k")?,
            enc_hidden: need("enc_hidden")?,
            enc_out: need("enc_out")?,
            vis_hidden: need("vis_hidden")?,
            speed_hidden: need("speed_hidden")?,
            angle_hidden: need("angle_hidden")?,
            head_hidden: need("head_hidden")?,
            dropout: kv
                .get::<f64>(None, "dropout")?
                .ok_or_else(|| Error::parse("checkpoint", "arch lacks dropout"))?,
        };
        arch.validate()?;
        Ok(arch)
    }
}

/// Shared per-frame encoder feeding a visual recurrent track, plus recurrent
/// tracks over past speeds and past angles. Output: the concatenated final
/// hidden states.
#[derive(Debug, Clone, PartialEq)]
pub struct Backbone {
    pub enc1: Linear,
    pub enc2: Linear,
    pub lstm_vis: Lstm,
    pub lstm_speed: Lstm,
    pub lstm_angle: Lstm,
    pub dropout: f64,
}

impl Backbone {
    pub fn new<R: Rng>(store: &mut ParameterStore, rng: &mut R, arch: &Arch) -> Self {
        Backbone {
            enc1: Linear::new(store, rng, "encoder.fc1", arch.obs_dim, arch.enc_hidden),
            enc2: Linear::new(store, rng, "encoder.fc2", arch.enc_hidden, arch.enc_out),
            lstm_vis: Lstm::new(store, rng, "lstm_vis", arch.enc_out, arch.vis_hidden),
            lstm_speed: Lstm::new(store, rng, "lstm_speed", 1, arch.speed_hidden),
            lstm_angle: Lstm::new(store, rng, "lstm_angle", 1, arch.angle_hidden),
            dropout: arch.dropout,
        }
    }

    pub fn forward(&self, g: &mut Graph, store: &ParameterStore, batch: &Batch, mode: DropoutMode) -> Result<Var> {
        let mut encoded = Vec::with_capacity(batch.frames.len());
        for frame in &batch.frames {
            let x = g.input(frame.clone());
            let h = self.enc1.forward(g, store, x)?;
            let h = g.relu(h);
            let h = self.enc2.forward(g, store, h)?;
            let h = g.relu(h);
            encoded.push(g.dropout(h, self.dropout, mode)?);
        }
        let vis = self.lstm_vis.run(g, store, &encoded)?;
        let speeds: Vec<Var> = batch.past_speeds.iter().map(|m| g.input(m.clone())).collect();
        let speed = self.lstm_speed.run(g, store, &speeds)?;
        let angles: Vec<Var> = batch.past_angles.iter().map(|m| g.input(m.clone())).collect();
        let angle = self.lstm_angle.run(g, store, &angles)?;
        let fused = g.concat(&[vis, speed, angle])?;
        g.dropout(fused, self.dropout, mode)
    }
}

/// `fc → relu → dropout → fc`.
#[derive(Debug, Clone, PartialEq)]
pub struct Head {
    pub fc1: Linear,
    pub fc2: Linear,
}

impl Head {
    pub fn new<R: Rng>(
        store: &mut ParameterStore,
        rng: &mut R,
        name: &str,
        input: usize,
        hidden: usize,
        out: usize,
    ) -> Self {
        Head {
            fc1: Linear::new(store, rng, &format!("{name}.fc1"), input, hidden),
            fc2: Linear::new(store, rng, &format!("{name}.fc2"), hidden, out),
        }
    }

    pub fn forward(
        &self,
        g: &mut Graph,
        store: &ParameterStore,
        x: Var,
        dropout: f64,
        mode: DropoutMode,
    ) -> Result<Var> {
        let h = self.fc1.forward(g, store, x)?;
        let h = g.relu(h);
        let h = g.dropout(h, dropout, mode)?;
        self.fc2.forward(g, store, h)
    }
}
