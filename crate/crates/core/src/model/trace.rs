use std::fmt;
use std::path::Path;

use crate::data::write_file;
use crate::error::Result;

/// The four attention blocks of the network.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum AttentionBlock {
    /// user over the items it interacted with
    UserItem,
    /// item over the users that interacted with it
    ItemUser,
    /// user over its social neighbours
    Social,
    /// item over its correlated items
    Correlative,
}

impl AttentionBlock {
    pub const ALL: [AttentionBlock; 4] = [
        AttentionBlock::UserItem,
        AttentionBlock::ItemUser,
        AttentionBlock::Social,
        AttentionBlock::Correlative,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            AttentionBlock::UserItem => "uv",
            AttentionBlock::ItemUser => "vu",
            AttentionBlock::Social => "uu",
            AttentionBlock::Correlative => "vv",
        }
    }

    /// True when the block's target is the user of the pair.
    pub fn user_side(self) -> bool {
        matches!(self, AttentionBlock::UserItem | AttentionBlock::Social)
    }
}

impl fmt::Display for AttentionBlock {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Attention weights produced for one prediction target.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TargetTrace {
    pub user: usize,
    pub item: usize,
    /// `(block, [(neighbour, weight)])`; blocks that did not run are absent.
    pub blocks: Vec<(AttentionBlock, Vec<(usize, f64)>)>,
}

impl TargetTrace {
    pub fn block(&self, b: AttentionBlock) -> Option<&[(usize, f64)]> {
        self.blocks
            .iter()
            .find(|(k, _)| *k == b)
            .map(|(_, v)| v.as_slice())
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct AttentionTrace {
    pub targets: Vec<TargetTrace>,
}

impl AttentionTrace {
    /// Every weight vector in the trace.
    pub fn weight_vectors(&self) -> impl Iterator<Item = (AttentionBlock, &[(usize, f64)])> {
        self.targets
            .iter()
            .flat_map(|t| t.blocks.iter().map(|(b, w)| (*b, w.as_slice())))
    }
}

/// Write `block<TAB>target<TAB>neighbor<TAB>weight` lines. `target` is the
/// user for user-side blocks and the item for item-side blocks.
pub fn export_attention(trace: &AttentionTrace, path: &Path) -> Result<()> {
    let mut buf = String::from("# block\ttarget\tneighbor\tweight\n");
    for t in &trace.targets {
        for (block, weights) in &t.blocks {
            let target = if block.user_side() { t.user } else { t.item };
            for (n, w) in weights {
                buf.push_str(&format!("{block}\t{target}\t{n}\t{w:?}\n"));
            }
        }
    }
    write_file(path, buf.as_bytes())
}
