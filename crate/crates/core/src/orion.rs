//! Segment-based clustering.
//!
//! Objects are visited in OID order. An object belonging to a composite
//! hierarchy pulls the whole hierarchy (found by walking up to the root and
//! then down the component tree, depth first) into a segment of its own.
//! Whatever is left is grouped by class, one segment per class. Segments
//! hold `seg_size` base pages and grow by chained overflow pages.

use std::collections::BTreeSet;

use crate::cactis::{ClusteringCost, MemoryCosts};
use crate::object_model::{ClassId, Database, Oid};
use crate::storage::{BufferPool, DiskModel, Placement, SegmentOwner, StorageError};

/// Root of the composite hierarchy containing `oid`.
pub fn hierarchy_root(db: &Database, oid: Oid) -> Oid {
    let mut cur = oid;
    // Parent links are acyclic by construction; the bound guards corrupt input.
    for _ in 0..=db.len() {
        match db.object(cur).and_then(|o| o.composite_parent) {
            Some(p) => cur = p,
            None => break,
        }
    }
    cur
}

/// Members of the hierarchy rooted at `root`, depth first.
pub fn hierarchy_members(db: &Database, root: Oid) -> Vec<Oid> {
    let mut out = Vec::new();
    let mut stack = vec![root];
    while let Some(o) = stack.pop() {
        out.push(o);
        if let Some(obj) = db.object(o) {
            stack.extend(obj.components.iter().rev());
        }
    }
    out
}

fn in_hierarchy(db: &Database, oid: Oid) -> bool {
    db.object(oid).is_some_and(|o| o.composite_parent.is_some() || !o.components.is_empty())
}

/// The order in which objects are laid out, as (segment owner, members).
pub fn cluster_plan(db: &Database) -> Vec<(SegmentOwner, Vec<Oid>)> {
    let mut pending: BTreeSet<Oid> = db.oids().collect();
    let mut plan = Vec::new();
    for oid in db.oids() {
        if !pending.contains(&oid) || !in_hierarchy(db, oid) {
            continue;
        }
        let root = hierarchy_root(db, oid);
        let members: Vec<Oid> = hierarchy_members(db, root).into_iter().filter(|m| pending.remove(m)).collect();
        plan.push((SegmentOwner::Hierarchy(root), members));
    }
    let mut by_class: std::collections::BTreeMap<ClassId, Vec<Oid>> = Default::default();
    for oid in pending {
        let class = db.object(oid).expect("listed").class;
        by_class.entry(class).or_default().push(oid);
    }
    plan.extend(by_class.into_iter().map(|(c, m)| (SegmentOwner::Class(c), m)));
    plan
}

/// Lays out the whole database, numbering pages after `base`'s.
pub fn cluster_all(db: &Database, seg_size: usize, base: &Placement) -> Result<Placement, StorageError> {
    let mut placement = base.successor();
    for (owner, members) in cluster_plan(db) {
        let seg = placement.new_segment(owner, seg_size);
        for oid in members {
            let size = db.object(oid).expect("listed").size;
            placement.place_in_segment(seg, oid, size)?;
        }
    }
    Ok(placement)
}

/// Places an object created between reorganizations: into its hierarchy's
/// segment when it has a composite parent, else into its class segment.
pub fn insert_object(db: &Database, placement: &mut Placement, oid: Oid, seg_size: usize) -> Result<crate::storage::PageId, StorageError> {
    let obj = db.object(oid).ok_or(StorageError::NotPlaced(oid))?;
    let owner = if obj.composite_parent.is_some() {
        let root = hierarchy_root(db, oid);
        // A root laid out alone sits in its class segment until the next reorganization.
        match placement.page_of(root).and_then(|p| placement.segment_of_page(p)) {
            Some(s) => placement.segment(s).expect("live segment").owner,
            None => SegmentOwner::Hierarchy(root),
        }
    } else {
        SegmentOwner::Class(obj.class)
    };
    let seg = match placement.segment_by_owner(owner) {
        Some(s) => s,
        None => placement.new_segment(owner, seg_size),
    };
    placement.place_in_segment(seg, oid, obj.size)
}

/// Placement dump: one `segment_id page_id oid` line per object.
pub fn dump(placement: &Placement) -> String {
    let mut out = String::new();
    for seg in placement.segments() {
        for page in seg.pages() {
            for oid in placement.page(page).map(|p| p.oids().collect::<Vec<_>>()).unwrap_or_default() {
                out.push_str(&format!("{} {} {}\n", seg.id.0, page, oid));
            }
        }
    }
    out
}

/// Cost of the cluster message run against the stored database.
///
/// Reading an object loads its whole segment. The first pass visits every
/// object in OID order and, for hierarchy members not yet collected, every
/// object of the hierarchy. The second pass gathers the remaining objects
/// class by class, loading every stored segment once per class. New pages
/// are written once.
pub fn cluster_message_cost(
    db: &Database,
    old: &Placement,
    new: &Placement,
    buffer: &mut BufferPool,
    disk: &DiskModel,
    mem: &MemoryCosts,
) -> ClusteringCost {
    let mut cost = ClusteringCost::default();
    if db.is_empty() {
        return cost;
    }
    let read = |oid: Oid, cost: &mut ClusteringCost, buffer: &mut BufferPool| {
        for p in old.page_of(oid).map(|p| old.load_set(p)).unwrap_or_default() {
            let out = buffer.fetch_page(p, disk);
            cost.io_reads += out.io_reads;
            cost.io_writes += out.io_writes;
            cost.time_ms += out.time_ms;
        }
        cost.time_ms += mem.compare_ms;
    };

    let plan = cluster_plan(db);
    let mut collected: BTreeSet<Oid> = BTreeSet::new();
    let mut hierarchies = plan.iter().filter(|(o, _)| matches!(o, SegmentOwner::Hierarchy(_))).peekable();
    for oid in db.oids() {
        read(oid, &mut cost, buffer);
        if collected.contains(&oid) || !in_hierarchy(db, oid) {
            continue;
        }
        let (_, members) = hierarchies.next().expect("plan lists hierarchies in discovery order");
        let mut cur = oid;
        while let Some(p) = db.object(cur).and_then(|o| o.composite_parent) {
            read(p, &mut cost, buffer);
            cur = p;
        }
        for &m in members {
            read(m, &mut cost, buffer);
            cost.time_ms += mem.move_ms(db.object(m).map_or(0, |o| o.size));
            collected.insert(m);
        }
    }
    debug_assert!(hierarchies.peek().is_none());

    // Nothing indexes a class's objects in the stored layout, so gathering
    // one class means loading every stored segment.
    let stored: Vec<_> = old.pages().filter(|p| !p.residents.is_empty()).map(|p| (p.id, p.residents.len())).collect();
    for (owner, members) in &plan {
        if !matches!(owner, SegmentOwner::Class(_)) {
            continue;
        }
        for &(p, residents) in &stored {
            for q in old.load_set(p) {
                let out = buffer.fetch_page(q, disk);
                cost.io_reads += out.io_reads;
                cost.io_writes += out.io_writes;
                cost.time_ms += out.time_ms;
            }
            cost.time_ms += residents as f64 * mem.compare_ms;
        }
        for &m in members {
            cost.time_ms += mem.move_ms(db.object(m).map_or(0, |o| o.size));
        }
    }

    for _ in new.pages().filter(|p| !p.residents.is_empty()) {
        let out = buffer.write_direct(disk);
        cost.io_writes += out.io_writes;
        cost.time_ms += out.time_ms;
    }
    cost
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::object_model::{ClassDef, ObjectInstance};

    fn db_with(classes: u32, objs: &[(u64, u32, Option<u64>)]) -> Database {
        let mut db = Database::new((0..classes).map(|i| ClassDef::new(ClassId(i), format!("c{i}"))).collect());
        for &(oid, class, parent) in objs {
            let mut o = ObjectInstance::new(Oid(oid), ClassId(class), 1);
            o.composite_parent = parent.map(Oid);
            db.add_object(o).unwrap();
        }
        db
    }

    #[test]
    fn hierarchy_and_loose_class_members() {
        let db = db_with(2, &[(1, 0, None), (2, 1, Some(1)), (3, 1, Some(1)), (4, 1, None), (5, 1, None)]);
        let p = cluster_all(&db, 5, &Placement::new(10)).unwrap();
        assert_eq!(p.segments().len(), 2);
        assert_eq!(p.segments()[0].owner, SegmentOwner::Hierarchy(Oid(1)));
        assert_eq!(p.segments()[1].owner, SegmentOwner::Class(ClassId(1)));
        p.check().unwrap();
    }

    #[test]
    fn no_configuration_edges_one_segment_per_class() {
        let db = db_with(3, &[(1, 0, None), (2, 2, None), (3, 0, None)]);
        let p = cluster_all(&db, 5, &Placement::new(10)).unwrap();
        assert_eq!(p.segments().len(), 2);
    }

    #[test]
    fn oversized_hierarchy_overflows() {
        let mut objs = vec![(1, 0, None)];
        objs.extend((2..=12).map(|i| (i, 0, Some(1))));
        let db = db_with(1, &objs);
        // 12 unit objects, 2 per page, 3 base pages: 6 pages, 3 of them overflow.
        let p = cluster_all(&db, 3, &Placement::new(2)).unwrap();
        let seg = &p.segments()[0];
        assert_eq!(seg.base_pages.len(), 3);
        assert_eq!(seg.overflow_pages.len(), 3);
    }

    #[test]
    fn empty_db_costs_nothing() {
        let db = db_with(1, &[]);
        let old = Placement::new(10);
        let new = cluster_all(&db, 5, &old).unwrap();
        let mut buf = BufferPool::new(10);
        let c = cluster_message_cost(&db, &old, &new, &mut buf, &DiskModel::default(), &MemoryCosts::default());
        assert_eq!(c, ClusteringCost::default());
    }

    #[test]
    fn unbuffered_single_page_reads_twice() {
        let db = db_with(1, &[(1, 0, None)]);
        let mut old = Placement::new(10);
        let pg = old.allocate_page();
        old.place(Oid(1), 1, pg).unwrap();
        let new = cluster_all(&db, 5, &old).unwrap();
        let mut buf = BufferPool::new(0);
        let c = cluster_message_cost(&db, &old, &new, &mut buf, &DiskModel::default(), &MemoryCosts::default());
        assert!(c.io_reads >= 2);
        assert_eq!(c.io_writes, 1);
        let mut big = BufferPool::new(10);
        let c = cluster_message_cost(&db, &old, &new, &mut big, &DiskModel::default(), &MemoryCosts::default());
        assert_eq!(c.io_reads, 1);
    }

    #[test]
    fn reading_an_object_loads_its_segment() {
        let db = db_with(1, &[(1, 0, None)]);
        let old = cluster_all(&db, 5, &Placement::new(10)).unwrap();
        assert_eq!(old.used_pages(), 1);
        assert_eq!(old.load_set(old.page_of(Oid(1)).unwrap()).len(), 5);
        let new = cluster_all(&db, 5, &old).unwrap();
        let mut buf = BufferPool::new(10);
        let c = cluster_message_cost(&db, &old, &new, &mut buf, &DiskModel::default(), &MemoryCosts::default());
        assert_eq!((c.io_reads, c.io_writes), (5, 1));
    }
}
