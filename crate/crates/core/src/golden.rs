//! Small hand-checkable scenarios: a six-object packing problem and a
//! six-step car design session placed by the dynamic clusterer.

use crate::cactis::{self, CactisError};
use crate::ck::{CkClusterer, CkError, CkParams};
use crate::object_model::{AccessFrequencies, ClassDef, ClassId, Database, ObjectInstance, Oid, RelKind};
use crate::storage::Placement;

/// Six objects with access and crossing statistics; blocks hold 10 units.
pub fn packing_db() -> Database {
    let mut db = Database::new(vec![ClassDef::new(ClassId(0), "object")]);
    let specs = [(1, 7, 90), (2, 2, 200), (3, 5, 80), (4, 6, 50), (5, 4, 300), (6, 3, 170)];
    for (oid, size, heat) in specs {
        let mut o = ObjectInstance::new(Oid(oid), ClassId(0), size).with_name(format!("O{oid}"));
        o.access_count = heat;
        db.add_object(o).expect("fresh oid");
    }
    for (a, b, crossed) in [(1, 3, 30), (1, 4, 80), (2, 3, 70), (2, 6, 200), (4, 5, 100), (5, 6, 50)] {
        let e = db.link(RelKind::Configuration, Oid(a), Oid(b));
        for _ in 0..crossed {
            db.record_crossing(e).expect("known edge");
        }
    }
    db
}

pub const PACKING_CAPACITY: u64 = 10;

pub fn packing_expected() -> Vec<Vec<&'static str>> {
    vec![vec!["O5", "O4"], vec!["O2", "O6", "O3"], vec!["O1"]]
}

pub fn packing_blocks() -> Result<Vec<Vec<String>>, CactisError> {
    let db = packing_db();
    let layout = cactis::recluster(&db, PACKING_CAPACITY)?;
    Ok(layout.blocks.iter().map(|b| b.iter().map(|&o| db.object(o).expect("placed").label()).collect()).collect())
}

pub const DESIGN_PAGE_SIZE: u64 = 5;

fn design_classes() -> Vec<ClassDef> {
    let defs = [("Ferrari", 2, (0.20, 0.10, 0.70)), ("car", 2, (0.65, 0.30, 0.05)), ("body", 3, (0.25, 0.75, 0.0)), ("drivetrain", 3, (0.30, 0.70, 0.0))];
    defs.iter()
        .enumerate()
        .map(|(i, &(name, size, (v, c, e)))| {
            let mut k = ClassDef::new(ClassId(i as u32), name);
            k.abstract_size = Some(size);
            k.freq = AccessFrequencies::new(v, c, e);
            k
        })
        .collect()
}

/// How each design object relates to an earlier one.
enum Link {
    None,
    EquivalentOf(u64),
    ComponentOf(u64),
    VersionOf(u64),
}

/// (name, version, class index, link, lookup cost of the link).
const DESIGN_STEPS: [(&str, u32, u32, Link, f64); 6] = [
    ("Nice", 1, 1, Link::None, 0.0),
    ("F40", 0, 0, Link::EquivalentOf(1), 0.5),
    ("Sport", 2, 2, Link::ComponentOf(1), 0.9),
    ("Good", 3, 3, Link::ComponentOf(1), 0.8),
    ("Nice", 2, 1, Link::VersionOf(1), 0.7),
    ("Sport", 3, 2, Link::ComponentOf(5), 0.6),
];

/// Page of every object after each creation, as `(label, page)` pairs in creation order.
pub fn design_trace(split: bool) -> Result<Vec<Vec<(String, u64)>>, CkError> {
    let classes = design_classes();
    let mut db = Database::new(classes.clone());
    let mut placement = Placement::new(DESIGN_PAGE_SIZE);
    let mut ck = CkClusterer::new(CkParams { isplit: split, ..CkParams::default() });
    let mut trace = Vec::new();
    for (i, (name, version, class, link, cost)) in DESIGN_STEPS.iter().enumerate() {
        let oid = Oid(i as u64 + 1);
        let size = classes[*class as usize].abstract_size.expect("design classes are sized");
        let mut o = ObjectInstance::new(oid, ClassId(*class), size)
            .with_name(format!("{name}[{version}].{}", classes[*class as usize].name));
        o.version_no = *version;
        let edge = match *link {
            Link::None => None,
            Link::EquivalentOf(p) => {
                o.equivalents.push(Oid(p));
                Some((RelKind::Equivalence, p))
            }
            Link::ComponentOf(p) => {
                o.composite_parent = Some(Oid(p));
                Some((RelKind::Configuration, p))
            }
            Link::VersionOf(p) => {
                o.version_ancestor = Some(Oid(p));
                Some((RelKind::Version, p))
            }
        };
        db.add_object(o)?;
        if let Some((kind, p)) = edge {
            let e = db.find_edge(kind, oid, Oid(p)).expect("installed with the object");
            db.set_lookup_cost(e, *cost)?;
        }
        ck.place_object(&mut db, &mut placement, oid)?;
        let step = db
            .oids()
            .map(|o| (db.object(o).expect("listed").label(), placement.page_of(o).expect("placed").0))
            .collect();
        trace.push(step);
    }
    Ok(trace)
}

/// Expected page of each object after each creation.
pub fn design_expected(split: bool) -> Vec<Vec<(&'static str, u64)>> {
    let names = ["Nice[1].car", "F40[0].Ferrari", "Sport[2].body", "Good[3].drivetrain", "Nice[2].car", "Sport[3].body"];
    let final_pages: [u64; 6] = if split { [1, 2, 1, 3, 4, 4] } else { [1, 1, 2, 3, 4, 4] };
    (1..=6)
        .map(|n| {
            names[..n]
                .iter()
                .enumerate()
                .map(|(i, &name)| {
                    // F40 only moves when Sport[2] splits page 1.
                    let page = if split && i == 1 && n < 3 { 1 } else { final_pages[i] };
                    (name, page)
                })
                .collect()
        })
        .collect()
}
