//! Random class lattice and instance generation.
//!
//! Classes are generated in a fixed order and may only link to classes
//! generated before them, so superclass, component and equivalence links are
//! acyclic by construction. Version lineages are runs of consecutive classes:
//! each lineage length is drawn around `iavgver` and every class after the
//! head names its predecessor as its ancestor version class.

use rand::Rng;
use thiserror::Error;

use crate::ck::{self, CkParams};
use crate::object_model::{
    AccessFrequencies, AttrImpl, AttributeSlot, ClassDef, ClassId, Database, ModelError, ObjectInstance, Oid, RelKind,
};

/// Synthetic attribute values are drawn from `0..VALUE_DOMAIN`.
pub const VALUE_DOMAIN: i64 = 1000;

#[derive(Debug, Error, PartialEq)]
pub enum GenError {
    #[error("invalid schema parameters: {0}")]
    InvalidParams(String),
    #[error("schema has no classes")]
    EmptySchema,
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SchemaParams {
    pub ncl: u32,
    pub iavgver: u32,
    pub rpsuper: f64,
    pub rpcomp: f64,
    pub rpequi: f64,
    pub iavgnattr: u32,
    pub iavgasize: u32,
}

impl Default for SchemaParams {
    fn default() -> Self {
        Self { ncl: 20, iavgver: 3, rpsuper: 0.9, rpcomp: 0.5, rpequi: 0.1, iavgnattr: 10, iavgasize: 1 }
    }
}

impl SchemaParams {
    pub fn validate(&self) -> Result<(), GenError> {
        if self.ncl < 1 {
            return Err(GenError::InvalidParams("NCL must be at least 1".into()));
        }
        for (name, p) in [("RPSUPER", self.rpsuper), ("RPCOMP", self.rpcomp), ("RPEQUI", self.rpequi)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(GenError::InvalidParams(format!("{name} must lie in [0, 1], got {p}")));
            }
        }
        for (name, v) in [("IAVGVER", self.iavgver), ("IAVGNATTR", self.iavgnattr), ("IAVGASIZE", self.iavgasize)] {
            if v < 1 {
                return Err(GenError::InvalidParams(format!("{name} must be at least 1")));
            }
        }
        Ok(())
    }
}

/// Uniform integer on `[1, 2*avg - 1]`, whose mean is `avg`.
fn around<R: Rng + ?Sized>(rng: &mut R, avg: u32) -> u32 {
    rng.random_range(1..=2 * avg - 1)
}

pub fn generate_schema<R: Rng + ?Sized>(params: &SchemaParams, rng: &mut R) -> Result<Vec<ClassDef>, GenError> {
    params.validate()?;
    let n = params.ncl as usize;
    let mut classes: Vec<ClassDef> = (0..n).map(|i| ClassDef::new(ClassId(i as u32), format!("C{i}"))).collect();
    let mut lineage_left = 0u32;

    for i in 0..n {
        if lineage_left == 0 {
            lineage_left = around(rng, params.iavgver) - 1;
        } else {
            lineage_left -= 1;
            classes[i].version_ancestor_class = Some(ClassId(i as u32 - 1));
            classes[i - 1].version_descendant_class = Some(ClassId(i as u32));
        }
        let nattr = around(rng, params.iavgnattr);
        classes[i].attr_sizes = (0..nattr).map(|_| around(rng, params.iavgasize)).collect();

        if i > 0 {
            if rng.random_bool(params.rpsuper) {
                classes[i].superclass = Some(ClassId(rng.random_range(0..i) as u32));
            }
            if rng.random_bool(params.rpcomp) {
                let parent = rng.random_range(0..i);
                classes[i].component_of = Some(ClassId(parent as u32));
                classes[parent].components.push(ClassId(i as u32));
            }
            if rng.random_bool(params.rpequi) {
                classes[i].equivalent = Some(ClassId(rng.random_range(0..i) as u32));
            }
        }
    }

    for class in classes.iter_mut() {
        let mut w = [0.0f64; 3];
        for (slot, kind) in w.iter_mut().zip(RelKind::STRUCTURAL) {
            if class.participates(kind) {
                *slot = rng.random_range(0.05..1.0);
            }
        }
        let total: f64 = w.iter().sum();
        if total > 0.0 {
            class.freq = AccessFrequencies::new(w[0] / total, w[1] / total, w[2] / total);
        }
    }
    Ok(classes)
}

/// How a new version obtains the values it shares with its ancestor.
#[derive(Debug, Clone, Copy)]
pub enum Inheritance<'a> {
    /// Plain copies (Cactis and ORION runs).
    Copy,
    /// CK copy-or-reference decision, made against an unknown page and
    /// revisited once the object is placed.
    Ck(&'a CkParams),
}

#[derive(Debug, Clone, Copy)]
pub struct InstanceOptions<'a> {
    pub word_size: u64,
    pub inheritance: Inheritance<'a>,
}

/// Creates one object following the instance-generation procedure: pick a
/// class, attach to a random parent instance, a random ancestor version and
/// a random equivalent instance when the class calls for them.
pub fn create_instance<R: Rng + ?Sized>(
    db: &mut Database,
    rng: &mut R,
    opts: &InstanceOptions<'_>,
) -> Result<Oid, GenError> {
    if db.classes().is_empty() {
        return Err(GenError::EmptySchema);
    }
    let class = db.classes()[rng.random_range(0..db.classes().len())].clone();
    let oid = db.next_oid();
    let mut obj = ObjectInstance::new(oid, class.id, class.instance_size(opts.word_size));
    obj.attributes = class
        .attr_sizes
        .iter()
        .enumerate()
        .map(|(i, &w)| AttributeSlot::copy(i, w, rng.random_range(0..VALUE_DOMAIN)))
        .collect();

    if let Some(parent_class) = class.component_of {
        let parents = db.extent(parent_class);
        if !parents.is_empty() {
            obj.composite_parent = Some(parents[rng.random_range(0..parents.len())]);
        }
    }

    if let Some(anc_class) = class.version_ancestor_class {
        let free: Vec<Oid> =
            db.extent(anc_class).iter().copied().filter(|&o| db.object(o).is_some_and(|a| a.version_descendant.is_none())).collect();
        if !free.is_empty() {
            let anc = free[rng.random_range(0..free.len())];
            let ancestor = db.object(anc).expect("extent member");
            obj.version_ancestor = Some(anc);
            obj.version_no = ancestor.version_no + 1;
            let common = ancestor.attributes.len().min(obj.attributes.len());
            for i in 0..common {
                let inherited = db.attribute_value(anc, i).unwrap_or(0);
                let slot = &mut obj.attributes[i];
                slot.implementation = match opts.inheritance {
                    Inheritance::Copy => AttrImpl::Copy(inherited),
                    Inheritance::Ck(params) => {
                        let c = ck::attribute_cost(slot.size_words, false, params);
                        if c.choice == ck::ImplChoice::Reference {
                            AttrImpl::Reference { target: anc, update_counter: 0, convert_pending: false }
                        } else {
                            AttrImpl::Copy(inherited)
                        }
                    }
                };
            }
        }
    }

    if let Some(eq_class) = class.equivalent {
        let pool = db.extent(eq_class);
        if !pool.is_empty() {
            obj.equivalents.push(pool[rng.random_range(0..pool.len())]);
        }
    }

    db.add_object(obj)?;
    let new_edges: Vec<_> = db.edges_of(oid).to_vec();
    for e in new_edges {
        if db.edge(e).is_some_and(|edge| edge.lookup_cost == 0.0) {
            db.set_lookup_cost(e, rng.random_range(0.0..1.0))?;
        }
    }
    Ok(oid)
}

/// Builds the initial object base: `inobj` instances with OIDs dense from 1.
/// `on_create` runs after each object is added (CK places objects as they
/// are created).
pub fn generate_initial_db_with<R, F>(
    classes: Vec<ClassDef>,
    inobj: usize,
    rng: &mut R,
    opts: &InstanceOptions<'_>,
    mut on_create: F,
) -> Result<Database, GenError>
where
    R: Rng + ?Sized,
    F: FnMut(&mut Database, Oid) -> Result<(), GenError>,
{
    let mut db = Database::new(classes);
    for _ in 0..inobj {
        let oid = create_instance(&mut db, rng, opts)?;
        on_create(&mut db, oid)?;
    }
    Ok(db)
}

pub fn generate_initial_db<R: Rng + ?Sized>(
    params: &SchemaParams,
    inobj: usize,
    rng: &mut R,
    word_size: u64,
) -> Result<Database, GenError> {
    let classes = generate_schema(params, rng)?;
    let opts = InstanceOptions { word_size, inheritance: Inheritance::Copy };
    generate_initial_db_with(classes, inobj, rng, &opts, |_, _| Ok(()))
}
