//! Dynamic placement at creation time.
//!
//! A new object is scored against every page holding one of its related
//! objects, plus a fresh page. A page's score adds up
//!
//! * for each relationship kind the object takes part in, that kind's access
//!   frequency if the page holds none of the object's partners of that kind;
//! * for each attribute shared with the version ancestor, the cheaper of a
//!   remote lookup (1 when the ancestor sits elsewhere) and the scaled
//!   storage cost of a copy.
//!
//! An object with no placed relatives therefore starts a page of its own.
//! When the best page is full, the split policy may divide it along its
//! cheapest arcs instead of settling for the next best page.

use std::collections::{HashMap, HashSet};
use std::fmt;

use thiserror::Error;

use crate::object_model::{AttrImpl, ClassDef, Database, ModelError, Oid, RelKind};
use crate::storage::{PageId, Placement, StorageError};

#[derive(Debug, Error, PartialEq)]
pub enum CkError {
    #[error("object {oid} of size {size} exceeds page capacity {capacity}")]
    ObjectTooLarge { oid: Oid, size: u64, capacity: u64 },
    #[error("node {0} is larger than a page")]
    NodeTooLarge(Oid),
    #[error("object {0} shares no attributes with its ancestor")]
    NoCommonAttributes(Oid),
    #[error("unknown object {0}")]
    UnknownOid(Oid),
    #[error(transparent)]
    Storage(#[from] StorageError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct CkParams {
    /// Local updates tolerated on a reference before it becomes a copy.
    pub ithreshold: u32,
    /// Weight of storage against lookups when costing copies.
    pub iscalef: f64,
    pub isplit: bool,
}

impl Default for CkParams {
    fn default() -> Self {
        Self { ithreshold: 25, iscalef: 0.5, isplit: true }
    }
}

impl CkParams {
    pub fn validate(&self) -> Result<(), String> {
        if self.ithreshold > 255 {
            return Err(format!("ITHRESHOLD must lie in 0..=255, got {}", self.ithreshold));
        }
        if !(0.0..=1.0).contains(&self.iscalef) {
            return Err(format!("ISCALEF must lie in [0, 1], got {}", self.iscalef));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ImplChoice {
    Copy,
    Reference,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AttrCost {
    pub copy_cost: f64,
    pub ref_cost: f64,
    pub choice: ImplChoice,
}

impl AttrCost {
    pub fn cost(&self) -> f64 {
        self.copy_cost.min(self.ref_cost)
    }
}

/// Costs of storing one inherited attribute of `size_words` by copy or by
/// reference, given whether the ancestor shares the candidate page.
pub fn attribute_cost(size_words: u32, same_page: bool, params: &CkParams) -> AttrCost {
    let ref_cost = if same_page { 0.0 } else { 1.0 };
    let copy_cost = params.iscalef * f64::from(size_words);
    let choice = if ref_cost < copy_cost { ImplChoice::Reference } else { ImplChoice::Copy };
    AttrCost { copy_cost, ref_cost, choice }
}

/// Per-attribute costs for the attributes `oid` shares with `ancestor`,
/// were `oid` stored on `page`.
pub fn attribute_impl_costs(
    db: &Database,
    oid: Oid,
    ancestor: Oid,
    params: &CkParams,
    placement: &Placement,
    page: PageId,
) -> Result<Vec<AttrCost>, CkError> {
    let obj = db.object(oid).ok_or(CkError::UnknownOid(oid))?;
    let anc = db.object(ancestor).ok_or(CkError::UnknownOid(ancestor))?;
    let common = obj.attributes.len().min(anc.attributes.len());
    if common == 0 {
        return Err(CkError::NoCommonAttributes(oid));
    }
    let same_page = placement.page_of(ancestor) == Some(page);
    Ok(obj.attributes[..common].iter().map(|a| attribute_cost(a.size_words, same_page, params)).collect())
}

/// The relationship most often used to reach instances of `class`.
/// Ties favour configuration, then version, then equivalence.
pub fn choose_initial_relationship(class: &ClassDef) -> RelKind {
    let f = &class.freq;
    let mut best = (RelKind::Configuration, f.configuration);
    for (kind, v) in [(RelKind::Version, f.version), (RelKind::Equivalence, f.equivalence)] {
        if v > best.1 {
            best = (kind, v);
        }
    }
    best.0
}

/// Records one local update of a reference slot. Returns true once the slot
/// has exceeded the threshold and is flagged for conversion to a copy.
pub fn on_attribute_update(implementation: &mut AttrImpl, params: &CkParams) -> bool {
    match implementation {
        AttrImpl::Reference { update_counter, convert_pending, .. } => {
            *update_counter = update_counter.saturating_add(1);
            if *update_counter > params.ithreshold {
                *convert_pending = true;
            }
            *convert_pending
        }
        AttrImpl::Copy(_) => false,
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SplitResult {
    pub subset_a: Vec<Oid>,
    pub subset_b: Vec<Oid>,
    /// Nodes that fit in neither subset; empty when the split succeeded.
    pub unplaced: Vec<Oid>,
    pub broken_arcs: Vec<(Oid, Oid, f64)>,
    pub c_total: f64,
    /// Elementary steps taken, excluding the initial sort of the arcs.
    pub ops: u64,
}

impl SplitResult {
    pub fn is_complete(&self) -> bool {
        self.unplaced.is_empty()
    }
}

#[derive(Clone, Copy, PartialEq)]
enum Side {
    A,
    B,
}

/// Greedy two-way split of a page's objects: arcs are taken by decreasing
/// cost and their endpoints are kept together when room allows. Nodes left
/// over go to whichever subset still has room. `c_total` is the cost of the
/// arcs whose endpoints end up apart.
pub fn page_split(nodes: &[(Oid, u64)], arcs: &[(Oid, Oid, f64)], capacity: u64) -> Result<SplitResult, CkError> {
    let size: HashMap<Oid, u64> = nodes.iter().copied().collect();
    for &(oid, s) in nodes {
        if s > capacity {
            return Err(CkError::NodeTooLarge(oid));
        }
    }
    let mut order: Vec<&(Oid, Oid, f64)> = arcs.iter().filter(|(h, t, _)| size.contains_key(h) && size.contains_key(t)).collect();
    order.sort_by(|x, y| y.2.total_cmp(&x.2).then((x.0, x.1).cmp(&(y.0, y.1))));

    let mut side: HashMap<Oid, Side> = HashMap::new();
    let mut room = [capacity, capacity];
    let slot = |s: Side| if s == Side::A { 0 } else { 1 };
    let mut res = SplitResult::default();

    for &&(head, tail, _) in &order {
        res.ops += 1;
        match (side.get(&head).copied(), side.get(&tail).copied()) {
            (None, None) => {
                let need = size[&head] + if head == tail { 0 } else { size[&tail] };
                for s in [Side::A, Side::B] {
                    if need <= room[slot(s)] {
                        room[slot(s)] -= need;
                        side.insert(head, s);
                        side.insert(tail, s);
                        break;
                    }
                }
            }
            (Some(s), None) | (None, Some(s)) => {
                let other = if side.contains_key(&head) { tail } else { head };
                if size[&other] <= room[slot(s)] {
                    room[slot(s)] -= size[&other];
                    side.insert(other, s);
                }
            }
            (Some(_), Some(_)) => {}
        }
    }
    for &(oid, s) in nodes {
        res.ops += 1;
        if side.contains_key(&oid) {
            continue;
        }
        if s <= room[0] {
            room[0] -= s;
            side.insert(oid, Side::A);
        } else if s <= room[1] {
            room[1] -= s;
            side.insert(oid, Side::B);
        } else {
            res.unplaced.push(oid);
        }
    }
    for &(oid, _) in nodes {
        match side.get(&oid) {
            Some(Side::A) => res.subset_a.push(oid),
            Some(Side::B) => res.subset_b.push(oid),
            None => {}
        }
    }
    for &(h, t, c) in arcs {
        if let (Some(x), Some(y)) = (side.get(&h), side.get(&t)) {
            if x != y {
                res.broken_arcs.push((h, t, c));
                res.c_total += c;
            }
        }
    }
    Ok(res)
}

/// One line of the selection/split log: `event page cost`.
#[derive(Debug, Clone, PartialEq)]
pub struct CkLogLine {
    pub event: CkEvent,
    pub page: PageId,
    pub cost: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CkEvent {
    /// A page was scored.
    Candidate,
    /// A better page was passed over because the object did not fit.
    SkippedFull,
    /// The page was split; cost is the split's broken-arc total.
    Split,
    /// The split was rejected in favour of the next candidate.
    SplitRejected,
    Chosen,
}

impl fmt::Display for CkLogLine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let ev = match self.event {
            CkEvent::Candidate => "candidate",
            CkEvent::SkippedFull => "skipped_full",
            CkEvent::Split => "split",
            CkEvent::SplitRejected => "split_rejected",
            CkEvent::Chosen => "chosen",
        };
        write!(f, "{} {} {:.6}", ev, self.page, self.cost)
    }
}

/// What a placement did, for I/O accounting.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CkPlacement {
    pub page: Option<PageId>,
    /// Existing pages read to score them.
    pub examined: Vec<PageId>,
    /// Pages allocated by this placement (fresh target or split-off page).
    pub allocated: Vec<PageId>,
    /// Pages whose contents changed.
    pub modified: Vec<PageId>,
    pub split: bool,
    /// Attribute slots converted to copies before placing.
    pub conversions: usize,
    pub comparisons: u64,
}

#[derive(Debug, Clone)]
pub struct CkClusterer {
    pub params: CkParams,
    pending: Vec<(Oid, usize)>,
    log: Vec<CkLogLine>,
    keep_log: bool,
}

impl CkClusterer {
    pub fn new(params: CkParams) -> Self {
        Self { params, pending: Vec::new(), log: Vec::new(), keep_log: false }
    }

    pub fn with_log(mut self) -> Self {
        self.keep_log = true;
        self
    }

    pub fn log(&self) -> &[CkLogLine] {
        &self.log
    }

    pub fn pending_conversions(&self) -> &[(Oid, usize)] {
        &self.pending
    }

    fn note(&mut self, event: CkEvent, page: PageId, cost: f64) {
        if self.keep_log {
            self.log.push(CkLogLine { event, page, cost });
        }
    }

    /// Counts a local update of attribute `attr_index` of `oid`. Returns true
    /// when this update flagged the slot for conversion.
    pub fn note_update(&mut self, db: &mut Database, oid: Oid, attr_index: usize) -> Result<bool, CkError> {
        let obj = db.object_mut(oid).ok_or(CkError::UnknownOid(oid))?;
        let Some(slot) = obj.attributes.iter_mut().find(|a| a.attr_index == attr_index) else {
            return Ok(false);
        };
        let was = matches!(slot.implementation, AttrImpl::Reference { convert_pending: true, .. });
        let now = on_attribute_update(&mut slot.implementation, &self.params);
        if now && !was {
            self.pending.push((oid, attr_index));
        }
        Ok(now && !was)
    }

    /// Objects reached from `oid` through its class's dominant relationship.
    fn partners(db: &Database, oid: Oid, kind: RelKind) -> Vec<Oid> {
        let Some(o) = db.object(oid) else { return Vec::new() };
        match kind {
            RelKind::Version => o.version_ancestor.iter().chain(&o.version_descendant).copied().collect(),
            RelKind::Configuration => o.composite_parent.iter().chain(&o.components).copied().collect(),
            RelKind::Equivalence => o.equivalents.clone(),
            RelKind::InheritanceDependency => Vec::new(),
        }
    }

    fn page_cost(
        &self,
        db: &Database,
        oid: Oid,
        placement: &Placement,
        page: PageId,
        partners: &[Oid],
        comparisons: &mut u64,
    ) -> f64 {
        let obj = db.object(oid).expect("checked by caller");
        let class = db.class(obj.class).expect("object class exists");
        let mut here = false;
        for &p in partners {
            *comparisons += 1;
            here |= placement.page_of(p) == Some(page);
        }
        let mut cost = if here { 0.0 } else { class.freq.of(choose_initial_relationship(class)) };
        if let Some(anc) = obj.version_ancestor {
            if let Ok(costs) = attribute_impl_costs(db, oid, anc, &self.params, placement, page) {
                cost += costs.iter().map(AttrCost::cost).sum::<f64>();
            }
        }
        cost
    }

    fn apply_pending(&mut self, db: &mut Database) -> Result<usize, CkError> {
        let mut n = 0;
        for (oid, attr) in std::mem::take(&mut self.pending) {
            if db.object(oid).is_some() && db.convert_to_copy(oid, attr)? {
                n += 1;
            }
        }
        Ok(n)
    }

    /// Sets each inherited attribute to its cheaper implementation for the
    /// page the object ended up on.
    fn settle_attributes(&self, db: &mut Database, oid: Oid, placement: &Placement, page: PageId) -> Result<(), CkError> {
        let Some(anc) = db.object(oid).and_then(|o| o.version_ancestor) else {
            return Ok(());
        };
        let Ok(costs) = attribute_impl_costs(db, oid, anc, &self.params, placement, page) else {
            return Ok(());
        };
        let values: Vec<i64> = (0..costs.len()).map(|i| db.attribute_value(anc, i).unwrap_or(0)).collect();
        let mut any_ref = false;
        let obj = db.object_mut(oid).expect("checked");
        for ((slot, c), v) in obj.attributes.iter_mut().zip(&costs).zip(values) {
            slot.implementation = match (c.choice, &slot.implementation) {
                (ImplChoice::Reference, AttrImpl::Reference { .. }) => slot.implementation.clone(),
                (ImplChoice::Reference, AttrImpl::Copy(_)) => {
                    AttrImpl::Reference { target: anc, update_counter: 0, convert_pending: false }
                }
                (ImplChoice::Copy, AttrImpl::Copy(_)) => slot.implementation.clone(),
                (ImplChoice::Copy, AttrImpl::Reference { .. }) => AttrImpl::Copy(v),
            };
            any_ref |= c.choice == ImplChoice::Reference;
        }
        if any_ref {
            db.link(RelKind::InheritanceDependency, oid, anc);
        }
        Ok(())
    }

    /// Places a newly created object. Pending reference-to-copy conversions
    /// are applied first.
    pub fn place_object(&mut self, db: &mut Database, placement: &mut Placement, oid: Oid) -> Result<CkPlacement, CkError> {
        let mut out = CkPlacement { conversions: self.apply_pending(db)?, ..Default::default() };
        let size = db.object(oid).ok_or(CkError::UnknownOid(oid))?.size;
        if size > placement.capacity() {
            return Err(CkError::ObjectTooLarge { oid, size, capacity: placement.capacity() });
        }
        if placement.page_of(oid).is_some() {
            return Err(StorageError::AlreadyPlaced(oid).into());
        }

        let obj = db.object(oid).expect("checked above");
        let kind = choose_initial_relationship(db.class(obj.class).ok_or(CkError::UnknownOid(oid))?);
        let partners = Self::partners(db, oid, kind);
        let mut related: Vec<PageId> =
            partners.iter().chain(obj.version_ancestor.iter()).filter_map(|&p| placement.page_of(p)).collect();
        related.sort();
        related.dedup();

        let fresh = placement.next_page_id();
        let mut scored: Vec<(f64, PageId)> = Vec::with_capacity(related.len() + 1);
        for &p in related.iter().chain(std::iter::once(&fresh)) {
            let c = self.page_cost(db, oid, placement, p, &partners, &mut out.comparisons);
            self.note(CkEvent::Candidate, p, c);
            scored.push((c, p));
        }
        scored.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        out.examined = related.clone();

        let fits = |placement: &Placement, p: PageId| p == fresh || placement.page(p).is_some_and(|pg| pg.fits(size));
        let first_fit = scored.iter().position(|&(_, p)| fits(placement, p)).expect("the fresh page always fits");

        let (best_cost, best) = scored[0];
        if first_fit > 0 && self.params.isplit && best != fresh {
            let next_cost = scored[first_fit].0;
            let page = placement.page(best).expect("scored page exists");
            let mut nodes: Vec<(Oid, u64)> = page.residents.clone();
            nodes.push((oid, size));
            let members: HashSet<Oid> = nodes.iter().map(|&(o, _)| o).collect();
            let mut arcs = Vec::new();
            for &(o, _) in &nodes {
                for &eid in db.edges_of(o) {
                    let e = db.edge(eid).expect("adjacency is consistent");
                    if e.endpoints.0 == o && members.contains(&e.endpoints.1) {
                        arcs.push((e.endpoints.0, e.endpoints.1, e.lookup_cost));
                    }
                }
            }
            let split = page_split(&nodes, &arcs, placement.capacity())?;
            out.comparisons += split.ops;
            if split.is_complete() && split.c_total < next_cost {
                self.note(CkEvent::Split, best, split.c_total);
                let new_page = placement.split_off(best, &split.subset_a.iter().copied().filter(|&o| o != oid).collect::<Vec<_>>())?;
                let target = if split.subset_a.contains(&oid) { best } else { new_page };
                placement.place(oid, size, target)?;
                out.allocated.push(new_page);
                out.modified.push(best);
                out.split = true;
                out.page = Some(target);
                self.note(CkEvent::Chosen, target, best_cost);
                self.settle_attributes(db, oid, placement, target)?;
                return Ok(out);
            }
            self.note(CkEvent::SplitRejected, best, split.c_total);
        }

        for &(c, p) in &scored[..first_fit] {
            self.note(CkEvent::SkippedFull, p, c);
        }
        let (cost, target) = scored[first_fit];
        if target == fresh {
            let allocated = placement.allocate_page();
            debug_assert_eq!(allocated, fresh);
            out.allocated.push(fresh);
        } else {
            out.modified.push(target);
        }
        placement.place(oid, size, target)?;
        out.page = Some(target);
        self.note(CkEvent::Chosen, target, cost);
        self.settle_attributes(db, oid, placement, target)?;
        Ok(out)
    }
}
