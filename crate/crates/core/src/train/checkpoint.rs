use super::config::TrainConfig;
use super::Trainer;
use crate::critic::CriticParams;
use crate::AdamState;
use crate::policy::PolicyParams;
use crate::{Error, Mat, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::io::{Read, Write};
use std::path::Path;

const MAGIC: &[u8; 4] = b"RGCK";
const VERSION: u32 = 1;

/// Versioned training snapshot: config, named flat parameter arrays
/// (little-endian f64), optimizer state, update-stream rng state, and the
/// iteration counter. Reloading reproduces forward passes bitwise.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub config: TrainConfig,
    pub iteration: u64,
    pub actor: PolicyParams,
    pub critic: CriticParams,
    pub actor_opt: AdamState,
    pub critic_opt: AdamState,
    pub rng_seed: [u8; 32],
    pub rng_word_pos: u128,
    pub rng_stream: u64,
}

impl Checkpoint {
    pub fn from_trainer(trainer: &Trainer) -> Result<Self> {
        let (cfg, actor, critic, actor_opt, critic_opt, rng, iteration) = trainer.parts();
        Ok(Checkpoint {
            config: cfg.clone(),
            iteration,
            actor: actor.clone(),
            critic: critic.clone(),
            actor_opt: actor_opt.clone(),
            critic_opt: critic_opt.clone(),
            rng_seed: rng.get_seed(),
            rng_word_pos: rng.get_word_pos(),
            rng_stream: rng.get_stream(),
        })
    }

    /// Rebuild a trainer that continues from this snapshot.
    pub fn into_trainer(self) -> Result<Trainer> {
        let mut rng = ChaCha8Rng::from_seed(self.rng_seed);
        rng.set_stream(self.rng_stream);
        rng.set_word_pos(self.rng_word_pos);
        Trainer::restore(
            self.config,
            self.actor,
            self.critic,
            self.actor_opt,
            self.critic_opt,
            rng,
            self.iteration,
        )
    }

    fn named_arrays(&self) -> Vec<(String, &Mat)> {
        let mut out = Vec::new();
        for (k, m) in self.actor.param_mats().into_iter().enumerate() {
            out.push((format!("actor.{k}"), m));
        }
        for (k, m) in self.critic.param_mats().into_iter().enumerate() {
            out.push((format!("critic.{k}"), m));
        }
        for (tag, opt) in [("actor", &self.actor_opt), ("critic", &self.critic_opt)] {
            for (k, m) in opt.m.iter().enumerate() {
                out.push((format!("opt.{tag}.m.{k}"), m));
            }
            for (k, m) in opt.v.iter().enumerate() {
                out.push((format!("opt.{tag}.v.{k}"), m));
            }
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut buf: Vec<u8> = Vec::new();
        buf.extend_from_slice(MAGIC);
        buf.extend_from_slice(&VERSION.to_le_bytes());
        let cfg_text = self.config.to_toml()?;
        buf.extend_from_slice(&(cfg_text.len() as u64).to_le_bytes());
        buf.extend_from_slice(cfg_text.as_bytes());
        buf.extend_from_slice(&self.iteration.to_le_bytes());
        buf.extend_from_slice(&self.actor_opt.step.to_le_bytes());
        buf.extend_from_slice(&self.critic_opt.step.to_le_bytes());
        buf.extend_from_slice(&self.rng_seed);
        buf.extend_from_slice(&self.rng_word_pos.to_le_bytes());
        buf.extend_from_slice(&self.rng_stream.to_le_bytes());

        let arrays = self.named_arrays();
        buf.extend_from_slice(&(arrays.len() as u32).to_le_bytes());
        for (name, mat) in arrays {
            buf.extend_from_slice(&(name.len() as u32).to_le_bytes());
            buf.extend_from_slice(name.as_bytes());
            buf.extend_from_slice(&(mat.rows() as u64).to_le_bytes());
            buf.extend_from_slice(&(mat.cols() as u64).to_le_bytes());
            for v in mat.data() {
                buf.extend_from_slice(&v.to_le_bytes());
            }
        }
        let mut f = std::fs::File::create(path)
            .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        f.write_all(&buf)
            .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)
            .and_then(|mut f| f.read_to_end(&mut bytes))
            .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        let mut r = Reader { bytes: &bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(Error::Io(format!("{}: not a checkpoint file", path.display())));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::Io(format!(
                "{}: unsupported checkpoint version {version}",
                path.display()
            )));
        }
        let cfg_len = r.u64()? as usize;
        let cfg_text = std::str::from_utf8(r.take(cfg_len)?)
            .map_err(|e| Error::Io(format!("config utf8: {e}")))?;
        let config = TrainConfig::from_toml(cfg_text)?;
        let iteration = r.u64()?;
        let actor_step = r.u64()?;
        let critic_step = r.u64()?;
        let mut rng_seed = [0u8; 32];
        rng_seed.copy_from_slice(r.take(32)?);
        let rng_word_pos = u128::from_le_bytes(r.take(16)?.try_into().unwrap());
        let rng_stream = r.u64()?;

        let n_arrays = r.u32()? as usize;
        let mut arrays = std::collections::HashMap::new();
        for _ in 0..n_arrays {
            let name_len = r.u32()? as usize;
            let name = std::str::from_utf8(r.take(name_len)?)
                .map_err(|e| Error::Io(format!("array name utf8: {e}")))?
                .to_string();
            let rows = r.u64()? as usize;
            let cols = r.u64()? as usize;
            let mut data = Vec::with_capacity(rows * cols);
            for _ in 0..rows * cols {
                data.push(f64::from_le_bytes(r.take(8)?.try_into().unwrap()));
            }
            arrays.insert(name, Mat::from_vec(rows, cols, data)?);
        }

        // Build a skeleton with the right architecture, then install the
        // stored arrays by name.
        let skeleton = Trainer::new(config.clone())?;
        let (_, actor, critic, actor_opt, critic_opt, _, _) = skeleton.parts();
        let mut actor = actor.clone();
        let mut critic = critic.clone();
        let mut actor_opt = actor_opt.clone();
        let mut critic_opt = critic_opt.clone();
        actor_opt.step = actor_step;
        critic_opt.step = critic_step;

        let mut install = |name: String, dst: &mut Mat| -> Result<()> {
            let src = arrays
                .get(&name)
                .ok_or_else(|| Error::Io(format!("checkpoint missing array '{name}'")))?;
            if src.shape() != dst.shape() {
                return Err(Error::Io(format!(
                    "array '{name}' has shape {:?}, expected {:?}",
                    src.shape(),
                    dst.shape()
                )));
            }
            *dst = src.clone();
            Ok(())
        };
        for (k, m) in actor.param_mats_mut().into_iter().enumerate() {
            install(format!("actor.{k}"), m)?;
        }
        for (k, m) in critic.param_mats_mut().into_iter().enumerate() {
            install(format!("critic.{k}"), m)?;
        }
        for (tag, opt) in [("actor", &mut actor_opt), ("critic", &mut critic_opt)] {
            for (k, m) in opt.m.iter_mut().enumerate() {
                install(format!("opt.{tag}.m.{k}"), m)?;
            }
            for (k, m) in opt.v.iter_mut().enumerate() {
                install(format!("opt.{tag}.v.{k}"), m)?;
            }
        }

        Ok(Checkpoint {
            config,
            iteration,
            actor,
            critic,
            actor_opt,
            critic_opt,
            rng_seed,
            rng_word_pos,
            rng_stream,
        })
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::Io("checkpoint truncated".into()));
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}
