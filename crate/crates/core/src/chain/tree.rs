use super::Party;

pub type BlockId = usize;

/// Depth window in which an orphaned block can still be referenced as an uncle.
pub const UNCLE_DEPTH: usize = 6;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Block {
    pub parent: Option<BlockId>,
    pub miner: Party,
    pub height: u64,
    pub published: bool,
    pub referenced: bool,
}

/// Append-only arena of blocks rooted at a published genesis block.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockTree {
    blocks: Vec<Block>,
}

impl Default for BlockTree {
    fn default() -> Self {
        Self::new()
    }
}

impl BlockTree {
    pub const GENESIS: BlockId = 0;

    pub fn new() -> Self {
        Self {
            blocks: vec![Block {
                parent: None,
                miner: Party::Honest,
                height: 0,
                published: true,
                referenced: false,
            }],
        }
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    pub fn block(&self, id: BlockId) -> &Block {
        &self.blocks[id]
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn height(&self, id: BlockId) -> u64 {
        self.blocks[id].height
    }

    pub fn parent(&self, id: BlockId) -> Option<BlockId> {
        self.blocks[id].parent
    }

    /// New unpublished block on top of `parent`.
    pub fn push(&mut self, parent: BlockId, miner: Party) -> BlockId {
        let height = self.blocks[parent].height + 1;
        self.blocks.push(Block {
            parent: Some(parent),
            miner,
            height,
            published: false,
            referenced: false,
        });
        self.blocks.len() - 1
    }

    /// Publishes `tip` and every ancestor. Returns the number of newly published blocks.
    pub fn publish(&mut self, tip: BlockId) -> usize {
        let mut n = 0;
        let mut cur = Some(tip);
        while let Some(id) = cur {
            if self.blocks[id].published {
                break;
            }
            self.blocks[id].published = true;
            n += 1;
            cur = self.blocks[id].parent;
        }
        n
    }

    pub fn mark_referenced(&mut self, id: BlockId) {
        self.blocks[id].referenced = true;
    }

    /// Ancestor of `id` at `height` (which must not exceed the height of `id`).
    pub fn ancestor_at(&self, mut id: BlockId, height: u64) -> BlockId {
        debug_assert!(height <= self.height(id));
        while self.blocks[id].height > height {
            id = self.blocks[id].parent.expect("non-genesis block has a parent");
        }
        id
    }

    pub fn is_ancestor(&self, anc: BlockId, desc: BlockId) -> bool {
        self.height(anc) <= self.height(desc) && self.ancestor_at(desc, self.height(anc)) == anc
    }

    pub fn lca(&self, a: BlockId, b: BlockId) -> BlockId {
        let h = self.height(a).min(self.height(b));
        let mut x = self.ancestor_at(a, h);
        let mut y = self.ancestor_at(b, h);
        while x != y {
            x = self.blocks[x].parent.expect("blocks share genesis");
            y = self.blocks[y].parent.expect("blocks share genesis");
        }
        x
    }

    /// Deepest published block on the chain ending at `tip`.
    pub fn deepest_published(&self, mut tip: BlockId) -> BlockId {
        while !self.blocks[tip].published {
            tip = self.blocks[tip].parent.expect("genesis is published");
        }
        tip
    }

    /// Blocks strictly after `from` up to and including `to`, oldest first.
    pub fn segment(&self, from: BlockId, to: BlockId) -> Vec<BlockId> {
        let mut out = Vec::new();
        let mut cur = to;
        while cur != from {
            out.push(cur);
            cur = self.blocks[cur].parent.expect("`from` must be an ancestor of `to`");
        }
        out.reverse();
        out
    }

    pub fn children(&self, id: BlockId) -> impl Iterator<Item = BlockId> + '_ {
        self.blocks
            .iter()
            .enumerate()
            .filter(move |(_, b)| b.parent == Some(id))
            .map(|(i, _)| i)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lca_and_publication() {
        let mut t = BlockTree::new();
        let a1 = t.push(0, Party::Agent(0));
        let a2 = t.push(a1, Party::Agent(0));
        let h1 = t.push(0, Party::Honest);
        assert_eq!(t.lca(a2, h1), 0);
        assert_eq!(t.deepest_published(a2), 0);
        assert_eq!(t.publish(a1), 1);
        assert_eq!(t.deepest_published(a2), a1);
        assert!(t.is_ancestor(a1, a2));
        assert!(!t.is_ancestor(h1, a2));
        assert_eq!(t.segment(0, a2), vec![a1, a2]);
    }
}
