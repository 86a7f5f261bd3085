//! All trainable parameters of the system, grouped the way training
//! freezes them.

use std::collections::BTreeSet;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::checkpoint::{Checkpoint, ParamGroup};
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::fusion::{InstanceFusionParams, VideoFusionParams};
use crate::reasoner::{LoraSet, PrefixProjector, ToyLm};
use crate::rng::SeededRng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum GroupId {
    Projector,
    FusionInstance,
    FusionVideo,
    ToylmBase,
    Lora,
}

impl GroupId {
    pub const ALL: [GroupId; 5] = [
        GroupId::Projector,
        GroupId::FusionInstance,
        GroupId::FusionVideo,
        GroupId::ToylmBase,
        GroupId::Lora,
    ];

    pub fn name(self) -> &'static str {
        match self {
            GroupId::Projector => "projector",
            GroupId::FusionInstance => "fusion_instance",
            GroupId::FusionVideo => "fusion_video",
            GroupId::ToylmBase => "toylm_base",
            GroupId::Lora => "lora",
        }
    }
}

impl fmt::Display for GroupId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for GroupId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        GroupId::ALL
            .into_iter()
            .find(|g| g.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown parameter group {s}")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelBundle {
    pub projector: PrefixProjector,
    pub fusion_instance: InstanceFusionParams,
    pub fusion_video: VideoFusionParams,
    pub toylm: ToyLm,
    pub lora: LoraSet,
}

/// Path of the adapter file stored next to a base checkpoint.
pub fn lora_path(base: &Path) -> PathBuf {
    let mut name = base
        .file_name()
        .map(|n| n.to_os_string())
        .unwrap_or_default();
    name.push(".lora");
    base.with_file_name(name)
}

impl ModelBundle {
    /// Fresh parameters; group `k` (in [`GroupId::ALL`] order) draws from
    /// `SeededRng::split(seed, k)`.
    pub fn init(cfg: &RunConfig, seed: u64) -> Self {
        let rng = |k: u64| SeededRng::split(seed, k);
        let projector = PrefixProjector::init(cfg, &mut rng(0));
        let fusion_instance = InstanceFusionParams::init(cfg, &mut rng(1));
        let fusion_video = VideoFusionParams::init(cfg, &mut rng(2));
        let toylm = ToyLm::init(cfg, &mut rng(3));
        let lora = LoraSet::init(&toylm, cfg.lora_rank, cfg.lora_alpha, &mut rng(4));
        Self {
            projector,
            fusion_instance,
            fusion_video,
            toylm,
            lora,
        }
    }

    pub fn group_bytes(&self, id: GroupId) -> Vec<u8> {
        match id {
            GroupId::Projector => self.projector.to_bytes(),
            GroupId::FusionInstance => self.fusion_instance.to_bytes(),
            GroupId::FusionVideo => self.fusion_video.to_bytes(),
            GroupId::ToylmBase => self.toylm.to_bytes(),
            GroupId::Lora => self.lora.to_bytes(),
        }
    }

    /// Groups whose serialized bytes differ between `self` and `other`.
    pub fn changed_groups(&self, other: &ModelBundle) -> BTreeSet<GroupId> {
        GroupId::ALL
            .into_iter()
            .filter(|&g| self.group_bytes(g) != other.group_bytes(g))
            .collect()
    }

    pub fn base_checkpoint(&self) -> Checkpoint {
        let mut ck = Checkpoint::default();
        ck.push_group(GroupId::Projector.name(), &self.projector);
        ck.push_group(GroupId::FusionInstance.name(), &self.fusion_instance);
        ck.push_group(GroupId::FusionVideo.name(), &self.fusion_video);
        ck.push_group(GroupId::ToylmBase.name(), &self.toylm);
        ck
    }

    pub fn lora_checkpoint(&self) -> Checkpoint {
        let mut ck = Checkpoint::default();
        ck.push_group(GroupId::Lora.name(), &self.lora);
        ck
    }

    /// Writes the base groups to `path` and the adapters to `path.lora`.
    pub fn save(&self, path: &Path) -> Result<()> {
        self.base_checkpoint().save(path)?;
        self.lora_checkpoint().save(&lora_path(path))
    }

    /// Shapes and non-tensor settings (heads, activation, adapter scale)
    /// come from `cfg`; a missing adapter file leaves fresh adapters.
    pub fn load(path: &Path, cfg: &RunConfig) -> Result<Self> {
        let mut b = Self::init(cfg, 0);
        let ck = Checkpoint::load(path)?;
        ck.load_group(GroupId::Projector.name(), &mut b.projector)?;
        ck.load_group(GroupId::FusionInstance.name(), &mut b.fusion_instance)?;
        ck.load_group(GroupId::FusionVideo.name(), &mut b.fusion_video)?;
        ck.load_group(GroupId::ToylmBase.name(), &mut b.toylm)?;
        let lp = lora_path(path);
        if lp.exists() {
            Checkpoint::load(&lp)?.load_group(GroupId::Lora.name(), &mut b.lora)?;
        }
        Ok(b)
    }
}
