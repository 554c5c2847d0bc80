//! Statistics-driven greedy block packing.
//!
//! Blocks are seeded with the most accessed unassigned object and grown by
//! repeatedly pulling in the unassigned neighbour reached through the most
//! crossed relationship of any object already in the block. The block closes
//! when that neighbour does not fit, or when no unassigned neighbour is left.
//! Ties go to the lowest OID.

use std::collections::HashSet;

use thiserror::Error;

use crate::object_model::{Database, EdgeId, Oid};
use crate::storage::{BufferPool, DiskModel, Placement, StorageError};

#[derive(Debug, Error, PartialEq)]
pub enum CactisError {
    #[error("object {oid} of size {size} exceeds block capacity {capacity}")]
    ObjectTooLarge { oid: Oid, size: u64, capacity: u64 },
    #[error(transparent)]
    Storage(#[from] StorageError),
}

#[derive(Debug, Clone, PartialEq)]
pub enum CactisEvent {
    /// A block was opened with `seed`; `scanned` unassigned objects were examined to find it.
    NewBlock { block: usize, seed: Oid, access_count: u64, scanned: usize },
    /// `oid` joined the block through `edge`; `examined` lists the distinct
    /// unassigned neighbours weighed in this step.
    Added { block: usize, oid: Oid, edge: EdgeId, crossing: u64, examined: Vec<Oid> },
    /// The block closed; `rejected` is the best candidate that did not fit, if any.
    Closed { block: usize, used: u64, rejected: Option<Oid>, examined: Vec<Oid> },
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct CactisLayout {
    pub blocks: Vec<Vec<Oid>>,
    pub log: Vec<CactisEvent>,
}

impl CactisLayout {
    /// Materializes the blocks as pages, numbered after `base`'s pages.
    pub fn to_placement(&self, db: &Database, base: &Placement) -> Result<Placement, CactisError> {
        let mut placement = base.successor();
        for block in &self.blocks {
            let page = placement.allocate_page();
            for &oid in block {
                let size = db.object(oid).map(|o| o.size).unwrap_or(0);
                placement.place(oid, size, page)?;
            }
        }
        Ok(placement)
    }

    /// Placement dump: one `block_id oid` line per object, blocks numbered from 1.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for (i, block) in self.blocks.iter().enumerate() {
            for oid in block {
                out.push_str(&format!("{} {}\n", i + 1, oid));
            }
        }
        out
    }
}

pub fn recluster(db: &Database, capacity: u64) -> Result<CactisLayout, CactisError> {
    for o in db.objects() {
        if o.size > capacity {
            return Err(CactisError::ObjectTooLarge { oid: o.oid, size: o.size, capacity });
        }
    }
    let mut by_heat: Vec<(u64, Oid)> = db.objects().map(|o| (o.access_count, o.oid)).collect();
    by_heat.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));

    let mut assigned: HashSet<Oid> = HashSet::with_capacity(db.len());
    let mut layout = CactisLayout::default();
    let mut cursor = 0;

    while assigned.len() < db.len() {
        while assigned.contains(&by_heat[cursor].1) {
            cursor += 1;
        }
        let (heat, seed) = by_heat[cursor];
        let block_no = layout.blocks.len();
        layout.log.push(CactisEvent::NewBlock {
            block: block_no,
            seed,
            access_count: heat,
            scanned: db.len() - assigned.len(),
        });
        assigned.insert(seed);
        let mut block = vec![seed];
        let mut used = db.object(seed).expect("listed").size;

        let closing = loop {
            // best = (crossing count, outside oid, edge)
            let mut best: Option<(u64, Oid, EdgeId)> = None;
            let mut examined: Vec<Oid> = Vec::new();
            for &member in &block {
                for &eid in db.edges_of(member) {
                    let edge = db.edge(eid).expect("adjacency is consistent");
                    let other = edge.other(member);
                    if assigned.contains(&other) {
                        continue;
                    }
                    if !examined.contains(&other) {
                        examined.push(other);
                    }
                    let better = match best {
                        None => true,
                        Some((c, o, e)) => {
                            edge.crossing_count > c
                                || (edge.crossing_count == c && (other < o || (other == o && eid < e)))
                        }
                    };
                    if better {
                        best = Some((edge.crossing_count, other, eid));
                    }
                }
            }
            let Some((crossing, next, edge)) = best else {
                break (None, examined);
            };
            let size = db.object(next).expect("edge endpoint").size;
            if used + size > capacity {
                break (Some(next), examined);
            }
            used += size;
            assigned.insert(next);
            block.push(next);
            layout.log.push(CactisEvent::Added { block: block_no, oid: next, edge, crossing, examined });
        };
        let (rejected, examined) = closing;
        layout.log.push(CactisEvent::Closed { block: block_no, used, rejected, examined });
        layout.blocks.push(block);
    }
    Ok(layout)
}

/// Memory operation timings charged by reorganizations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MemoryCosts {
    /// Time to access one memory word.
    pub word_access_ms: f64,
    /// Time to compare two memory words.
    pub compare_ms: f64,
    pub word_size: u64,
}

impl Default for MemoryCosts {
    fn default() -> Self {
        Self { word_access_ms: 0.0001, compare_ms: 0.0007, word_size: 4 }
    }
}

impl MemoryCosts {
    pub fn move_ms(&self, bytes: u64) -> f64 {
        bytes.div_ceil(self.word_size.max(1)) as f64 * self.word_access_ms
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ClusteringCost {
    pub io_reads: u64,
    pub io_writes: u64,
    pub time_ms: f64,
}

impl ClusteringCost {
    pub fn io(&self) -> u64 {
        self.io_reads + self.io_writes
    }
}

/// Cost of running the packer against the stored database.
///
/// The packer's visits are replayed against the old placement through the
/// buffer: every seed selection scans the pages still holding unassigned
/// objects (their counters live with them), and every assigned object is
/// read from its old page. Each new block is written once. Counter
/// maintenance is not charged.
pub fn recluster_cost(
    db: &Database,
    old: &Placement,
    layout: &CactisLayout,
    buffer: &mut BufferPool,
    disk: &DiskModel,
    mem: &MemoryCosts,
) -> ClusteringCost {
    let mut cost = ClusteringCost::default();
    if layout.blocks.is_empty() {
        return cost;
    }
    let fetch = |oid: Oid, buffer: &mut BufferPool, cost: &mut ClusteringCost| {
        if let Some(p) = old.page_of(oid) {
            let out = buffer.fetch_page(p, disk);
            cost.io_reads += out.io_reads;
            cost.io_writes += out.io_writes;
            cost.time_ms += out.time_ms;
        }
    };

    for event in &layout.log {
        match event {
            CactisEvent::NewBlock { seed, scanned, .. } => {
                // Access counters live in memory, so finding the seed only costs comparisons.
                cost.time_ms += *scanned as f64 * mem.compare_ms;
                fetch(*seed, buffer, &mut cost);
                cost.time_ms += mem.move_ms(db.object(*seed).map_or(0, |o| o.size));
            }
            CactisEvent::Added { oid, examined, .. } => {
                for &o in examined {
                    fetch(o, buffer, &mut cost);
                    cost.time_ms += mem.compare_ms;
                }
                cost.time_ms += mem.move_ms(db.object(*oid).map_or(0, |o| o.size));
            }
            CactisEvent::Closed { examined, .. } => {
                for &o in examined {
                    fetch(o, buffer, &mut cost);
                    cost.time_ms += mem.compare_ms;
                }
                let out = buffer.write_direct(disk);
                cost.io_writes += out.io_writes;
                cost.time_ms += out.time_ms;
            }
        }
    }
    cost
}
