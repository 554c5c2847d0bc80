//! Schema, object graph and usage statistics.
//!
//! A [`Database`] owns the class definitions, every [`ObjectInstance`] and the
//! undirected [`RelationshipEdge`] set connecting them. Reciprocal links
//! (parent/component, ancestor/descendant, equivalence) are installed by
//! [`Database::add_object`], so callers only describe the new object's
//! outgoing links.
//!
//! Access and crossing counters feed the Cactis packer; the per-class
//! access-frequency hints feed CK.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::fmt::Write as _;

use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ClassId(pub u32);

/// Object identifier. Assigned once, never reused.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Oid(pub u64);

impl fmt::Display for Oid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl fmt::Display for ClassId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EdgeId(pub usize);

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("object {0} already exists")]
    DuplicateOid(Oid),
    #[error("object {from} references missing object {to}")]
    DanglingReference { from: Oid, to: Oid },
    #[error("unknown class {0}")]
    UnknownClass(ClassId),
    #[error("unknown object {0}")]
    UnknownOid(Oid),
    #[error("unknown edge {0:?}")]
    UnknownEdge(EdgeId),
    #[error("object {0} already has a descendant version")]
    VersionConflict(Oid),
    #[error("object {0} must have a positive size")]
    ZeroSize(Oid),
    #[error("counter overflow on {0}")]
    CounterOverflow(String),
}

/// The structural relationship kinds an edge can carry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum RelKind {
    Version,
    Configuration,
    Equivalence,
    /// A reference-implemented inherited attribute pointing at the ancestor.
    InheritanceDependency,
}

impl RelKind {
    pub const STRUCTURAL: [RelKind; 3] = [RelKind::Version, RelKind::Configuration, RelKind::Equivalence];

    pub fn as_str(self) -> &'static str {
        match self {
            RelKind::Version => "version",
            RelKind::Configuration => "configuration",
            RelKind::Equivalence => "equivalence",
            RelKind::InheritanceDependency => "inheritance",
        }
    }

    pub fn parse(s: &str) -> Option<RelKind> {
        match s {
            "version" => Some(RelKind::Version),
            "configuration" => Some(RelKind::Configuration),
            "equivalence" => Some(RelKind::Equivalence),
            "inheritance" => Some(RelKind::InheritanceDependency),
            _ => None,
        }
    }
}

/// User-supplied CK hints: how often each structural relationship is used to
/// reach instances of a class.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct AccessFrequencies {
    pub version: f64,
    pub configuration: f64,
    pub equivalence: f64,
}

impl AccessFrequencies {
    pub fn new(version: f64, configuration: f64, equivalence: f64) -> Self {
        Self { version, configuration, equivalence }
    }

    pub fn of(&self, kind: RelKind) -> f64 {
        match kind {
            RelKind::Version => self.version,
            RelKind::Configuration => self.configuration,
            RelKind::Equivalence => self.equivalence,
            RelKind::InheritanceDependency => 0.0,
        }
    }

    pub fn total(&self) -> f64 {
        self.version + self.configuration + self.equivalence
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassDef {
    pub id: ClassId,
    pub name: String,
    /// Attribute sizes in memory words; the attribute count is its length.
    pub attr_sizes: Vec<u32>,
    pub superclass: Option<ClassId>,
    /// Classes whose instances are components of this class's instances.
    pub components: Vec<ClassId>,
    /// The class this one is a component of, if any.
    pub component_of: Option<ClassId>,
    pub equivalent: Option<ClassId>,
    pub version_ancestor_class: Option<ClassId>,
    pub version_descendant_class: Option<ClassId>,
    pub freq: AccessFrequencies,
    /// Size in abstract units used instead of `attr_sizes` (worked examples).
    pub abstract_size: Option<u64>,
}

impl ClassDef {
    pub fn new(id: ClassId, name: impl Into<String>) -> Self {
        Self {
            id,
            name: name.into(),
            attr_sizes: Vec::new(),
            superclass: None,
            components: Vec::new(),
            component_of: None,
            equivalent: None,
            version_ancestor_class: None,
            version_descendant_class: None,
            freq: AccessFrequencies::default(),
            abstract_size: None,
        }
    }

    pub fn attr_count(&self) -> usize {
        self.attr_sizes.len()
    }

    /// Size of an instance, in bytes or in abstract units when overridden.
    pub fn instance_size(&self, word_size: u64) -> u64 {
        match self.abstract_size {
            Some(units) => units,
            None => self.attr_sizes.iter().map(|&w| u64::from(w)).sum::<u64>() * word_size,
        }
    }

    /// Whether any structural relationship kind can reach this class.
    pub fn participates(&self, kind: RelKind) -> bool {
        match kind {
            RelKind::Version => self.version_ancestor_class.is_some() || self.version_descendant_class.is_some(),
            RelKind::Configuration => self.component_of.is_some() || !self.components.is_empty(),
            RelKind::Equivalence => self.equivalent.is_some(),
            RelKind::InheritanceDependency => self.version_ancestor_class.is_some(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum AttrImpl {
    /// The object stores the value itself.
    Copy(i64),
    /// The value lives in `target`; `update_counter` counts local updates.
    Reference { target: Oid, update_counter: u32, convert_pending: bool },
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttributeSlot {
    pub attr_index: usize,
    pub size_words: u32,
    pub implementation: AttrImpl,
}

impl AttributeSlot {
    pub fn copy(attr_index: usize, size_words: u32, value: i64) -> Self {
        Self { attr_index, size_words, implementation: AttrImpl::Copy(value) }
    }

    pub fn reference(attr_index: usize, size_words: u32, target: Oid) -> Self {
        Self {
            attr_index,
            size_words,
            implementation: AttrImpl::Reference { target, update_counter: 0, convert_pending: false },
        }
    }

    pub fn reference_target(&self) -> Option<Oid> {
        match self.implementation {
            AttrImpl::Reference { target, .. } => Some(target),
            AttrImpl::Copy(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObjectInstance {
    pub oid: Oid,
    pub class: ClassId,
    pub version_no: u32,
    pub size: u64,
    pub name: Option<String>,
    pub attributes: Vec<AttributeSlot>,
    pub composite_parent: Option<Oid>,
    pub components: Vec<Oid>,
    pub equivalents: Vec<Oid>,
    pub version_ancestor: Option<Oid>,
    pub version_descendant: Option<Oid>,
    pub access_count: u64,
}

impl ObjectInstance {
    pub fn new(oid: Oid, class: ClassId, size: u64) -> Self {
        Self {
            oid,
            class,
            version_no: 0,
            size,
            name: None,
            attributes: Vec::new(),
            composite_parent: None,
            components: Vec::new(),
            equivalents: Vec::new(),
            version_ancestor: None,
            version_descendant: None,
            access_count: 0,
        }
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = Some(name.into());
        self
    }

    pub fn label(&self) -> String {
        self.name.clone().unwrap_or_else(|| format!("O{}", self.oid.0))
    }

    pub fn size_words(&self) -> u64 {
        self.attributes.iter().map(|a| u64::from(a.size_words)).sum::<u64>().max(1)
    }
}

/// Size of an instance in bytes (or abstract units when the class overrides it).
pub fn object_size(class: &ClassDef, word_size: u64) -> u64 {
    class.instance_size(word_size)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RelationshipEdge {
    pub kind: RelKind,
    /// Stored with the smaller OID first; edges are undirected.
    pub endpoints: (Oid, Oid),
    pub crossing_count: u64,
    pub lookup_cost: f64,
}

impl RelationshipEdge {
    pub fn other(&self, oid: Oid) -> Oid {
        if self.endpoints.0 == oid {
            self.endpoints.1
        } else {
            self.endpoints.0
        }
    }

    pub fn touches(&self, oid: Oid) -> bool {
        self.endpoints.0 == oid || self.endpoints.1 == oid
    }
}

fn edge_key(kind: RelKind, a: Oid, b: Oid) -> (RelKind, Oid, Oid) {
    if a <= b {
        (kind, a, b)
    } else {
        (kind, b, a)
    }
}

#[derive(Debug, Clone, Default)]
pub struct Database {
    classes: Vec<ClassDef>,
    objects: BTreeMap<Oid, ObjectInstance>,
    edges: Vec<RelationshipEdge>,
    edge_index: HashMap<(RelKind, Oid, Oid), EdgeId>,
    adjacency: HashMap<Oid, Vec<EdgeId>>,
    extents: HashMap<ClassId, Vec<Oid>>,
    next_oid: u64,
    total_accesses: u64,
}

impl Database {
    pub fn new(classes: Vec<ClassDef>) -> Self {
        Self { classes, next_oid: 1, ..Default::default() }
    }

    pub fn classes(&self) -> &[ClassDef] {
        &self.classes
    }

    pub fn class(&self, id: ClassId) -> Option<&ClassDef> {
        self.classes.get(id.0 as usize).filter(|c| c.id == id)
    }

    pub fn class_of(&self, oid: Oid) -> Option<&ClassDef> {
        self.object(oid).and_then(|o| self.class(o.class))
    }

    pub fn len(&self) -> usize {
        self.objects.len()
    }

    pub fn is_empty(&self) -> bool {
        self.objects.is_empty()
    }

    pub fn object(&self, oid: Oid) -> Option<&ObjectInstance> {
        self.objects.get(&oid)
    }

    pub fn object_mut(&mut self, oid: Oid) -> Option<&mut ObjectInstance> {
        self.objects.get_mut(&oid)
    }

    /// Objects in OID order.
    pub fn objects(&self) -> impl Iterator<Item = &ObjectInstance> {
        self.objects.values()
    }

    pub fn oids(&self) -> impl Iterator<Item = Oid> + '_ {
        self.objects.keys().copied()
    }

    /// Instances of `class` in creation order.
    pub fn extent(&self, class: ClassId) -> &[Oid] {
        self.extents.get(&class).map(Vec::as_slice).unwrap_or(&[])
    }

    /// The OID the next generated object should take.
    pub fn next_oid(&self) -> Oid {
        Oid(self.next_oid)
    }

    pub fn edges(&self) -> &[RelationshipEdge] {
        &self.edges
    }

    pub fn edge(&self, id: EdgeId) -> Option<&RelationshipEdge> {
        self.edges.get(id.0)
    }

    pub fn edges_of(&self, oid: Oid) -> &[EdgeId] {
        self.adjacency.get(&oid).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn find_edge(&self, kind: RelKind, a: Oid, b: Oid) -> Option<EdgeId> {
        self.edge_index.get(&edge_key(kind, a, b)).copied()
    }

    pub fn total_accesses(&self) -> u64 {
        self.total_accesses
    }

    /// Inserts an object and installs every reciprocal link it implies.
    pub fn add_object(&mut self, instance: ObjectInstance) -> Result<Oid, ModelError> {
        let oid = instance.oid;
        if self.objects.contains_key(&oid) {
            return Err(ModelError::DuplicateOid(oid));
        }
        if self.class(instance.class).is_none() {
            return Err(ModelError::UnknownClass(instance.class));
        }
        if instance.size == 0 {
            return Err(ModelError::ZeroSize(oid));
        }
        let attr_targets = instance.attributes.iter().filter_map(AttributeSlot::reference_target);
        let referenced = instance
            .composite_parent
            .iter()
            .chain(&instance.components)
            .chain(&instance.equivalents)
            .chain(&instance.version_ancestor)
            .chain(&instance.version_descendant)
            .copied()
            .chain(attr_targets);
        for target in referenced {
            if !self.objects.contains_key(&target) {
                return Err(ModelError::DanglingReference { from: oid, to: target });
            }
        }
        if let Some(anc) = instance.version_ancestor {
            if self.objects[&anc].version_descendant.is_some() {
                return Err(ModelError::VersionConflict(anc));
            }
        }
        if let Some(desc) = instance.version_descendant {
            if self.objects[&desc].version_ancestor.is_some() {
                return Err(ModelError::VersionConflict(desc));
            }
        }

        let parent = instance.composite_parent;
        let components = instance.components.clone();
        let equivalents = instance.equivalents.clone();
        let ancestor = instance.version_ancestor;
        let descendant = instance.version_descendant;
        let mut ref_targets: Vec<Oid> = instance.attributes.iter().filter_map(AttributeSlot::reference_target).collect();
        ref_targets.sort();
        ref_targets.dedup();

        self.extents.entry(instance.class).or_default().push(oid);
        self.objects.insert(oid, instance);
        self.adjacency.entry(oid).or_default();
        self.next_oid = self.next_oid.max(oid.0 + 1);

        if let Some(p) = parent {
            let po = self.objects.get_mut(&p).expect("checked");
            if !po.components.contains(&oid) {
                po.components.push(oid);
            }
            self.link(RelKind::Configuration, p, oid);
        }
        for c in components {
            self.objects.get_mut(&c).expect("checked").composite_parent = Some(oid);
            self.link(RelKind::Configuration, oid, c);
        }
        for e in equivalents {
            let eo = self.objects.get_mut(&e).expect("checked");
            if !eo.equivalents.contains(&oid) {
                eo.equivalents.push(oid);
            }
            self.link(RelKind::Equivalence, oid, e);
        }
        if let Some(a) = ancestor {
            self.objects.get_mut(&a).expect("checked").version_descendant = Some(oid);
            self.link(RelKind::Version, a, oid);
        }
        if let Some(d) = descendant {
            self.objects.get_mut(&d).expect("checked").version_ancestor = Some(oid);
            self.link(RelKind::Version, oid, d);
        }
        for t in ref_targets {
            self.link(RelKind::InheritanceDependency, oid, t);
        }
        Ok(oid)
    }

    /// Adds (or returns the existing) undirected edge between `a` and `b`.
    pub fn link(&mut self, kind: RelKind, a: Oid, b: Oid) -> EdgeId {
        let key = edge_key(kind, a, b);
        if let Some(&id) = self.edge_index.get(&key) {
            return id;
        }
        let id = EdgeId(self.edges.len());
        self.edges.push(RelationshipEdge { kind, endpoints: (key.1, key.2), crossing_count: 0, lookup_cost: 0.0 });
        self.edge_index.insert(key, id);
        self.adjacency.entry(a).or_default().push(id);
        if a != b {
            self.adjacency.entry(b).or_default().push(id);
        }
        id
    }

    pub fn set_lookup_cost(&mut self, edge: EdgeId, cost: f64) -> Result<(), ModelError> {
        let e = self.edges.get_mut(edge.0).ok_or(ModelError::UnknownEdge(edge))?;
        e.lookup_cost = cost.max(0.0);
        Ok(())
    }

    pub fn record_access(&mut self, oid: Oid) -> Result<(), ModelError> {
        let o = self.objects.get_mut(&oid).ok_or(ModelError::UnknownOid(oid))?;
        o.access_count = o.access_count.checked_add(1).ok_or_else(|| ModelError::CounterOverflow(format!("object {oid}")))?;
        self.total_accesses += 1;
        Ok(())
    }

    pub fn record_crossing(&mut self, edge: EdgeId) -> Result<(), ModelError> {
        let e = self.edges.get_mut(edge.0).ok_or(ModelError::UnknownEdge(edge))?;
        e.crossing_count =
            e.crossing_count.checked_add(1).ok_or_else(|| ModelError::CounterOverflow(format!("edge {}", edge.0)))?;
        Ok(())
    }

    /// Replaces a reference slot with a copy of its target's current value.
    pub fn convert_to_copy(&mut self, oid: Oid, attr_index: usize) -> Result<bool, ModelError> {
        let target = {
            let obj = self.objects.get(&oid).ok_or(ModelError::UnknownOid(oid))?;
            match obj.attributes.iter().find(|a| a.attr_index == attr_index).and_then(AttributeSlot::reference_target) {
                Some(t) => t,
                None => return Ok(false),
            }
        };
        let value = self.attribute_value(target, attr_index).unwrap_or(0);
        let obj = self.objects.get_mut(&oid).expect("checked");
        if let Some(slot) = obj.attributes.iter_mut().find(|a| a.attr_index == attr_index) {
            slot.implementation = AttrImpl::Copy(value);
        }
        Ok(true)
    }

    /// Resolves an attribute value, following reference chains.
    pub fn attribute_value(&self, oid: Oid, attr_index: usize) -> Option<i64> {
        let mut cur = oid;
        for _ in 0..=self.objects.len() {
            let slot = self.objects.get(&cur)?.attributes.iter().find(|a| a.attr_index == attr_index)?;
            match slot.implementation {
                AttrImpl::Copy(v) => return Some(v),
                AttrImpl::Reference { target, .. } => cur = target,
            }
        }
        None
    }

    /// Text snapshot: object records `OID class version size`, then edge
    /// records `kind oid1 oid2 cost`.
    pub fn snapshot(&self) -> String {
        let mut out = String::new();
        for o in self.objects.values() {
            let _ = writeln!(out, "{} {} {} {}", o.oid, o.class, o.version_no, o.size);
        }
        for e in &self.edges {
            let _ = writeln!(out, "{} {} {} {}", e.kind.as_str(), e.endpoints.0, e.endpoints.1, e.lookup_cost);
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObjectRecord {
    pub oid: Oid,
    pub class: ClassId,
    pub version_no: u32,
    pub size: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EdgeRecord {
    pub kind: RelKind,
    pub a: Oid,
    pub b: Oid,
    pub cost: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Snapshot {
    pub objects: Vec<ObjectRecord>,
    pub edges: Vec<EdgeRecord>,
}

#[derive(Debug, Error, PartialEq)]
#[error("snapshot line {line}: {msg}")]
pub struct SnapshotError {
    pub line: usize,
    pub msg: String,
}

/// Parses the format written by [`Database::snapshot`].
pub fn parse_snapshot(text: &str) -> Result<Snapshot, SnapshotError> {
    let mut snap = Snapshot::default();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let err = |msg: &str| SnapshotError { line: i + 1, msg: msg.to_string() };
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 4 {
            return Err(err("expected 4 fields"));
        }
        if let Some(kind) = RelKind::parse(fields[0]) {
            let a = fields[1].parse().map_err(|_| err("bad oid"))?;
            let b = fields[2].parse().map_err(|_| err("bad oid"))?;
            let cost = fields[3].parse().map_err(|_| err("bad cost"))?;
            snap.edges.push(EdgeRecord { kind, a: Oid(a), b: Oid(b), cost });
        } else {
            if !snap.edges.is_empty() {
                return Err(err("object record after edge records"));
            }
            let oid = fields[0].parse().map_err(|_| err("bad oid"))?;
            let class = fields[1].parse().map_err(|_| err("bad class"))?;
            let version_no = fields[2].parse().map_err(|_| err("bad version"))?;
            let size = fields[3].parse().map_err(|_| err("bad size"))?;
            snap.objects.push(ObjectRecord { oid: Oid(oid), class: ClassId(class), version_no, size });
        }
    }
    Ok(snap)
}
