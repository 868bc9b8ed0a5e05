//! Epicardial vessel tree: topology, Poiseuille resistances, stenosis insertion.
//!
//! The tree is rooted at the aortic root. Every segment runs from its
//! parent's distal node (or the root node) to its own distal node. Leaves are
//! the six coronary outlets, each coupled to one microvascular lumped model.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum BranchLabel {
    Trunk,
    Lad,
    Om1,
    Om2,
    Lcx,
    Am,
    Rca,
}

impl BranchLabel {
    /// The six outlet branches, left tree first.
    pub const OUTLETS: [BranchLabel; 6] = [
        BranchLabel::Lad,
        BranchLabel::Om1,
        BranchLabel::Om2,
        BranchLabel::Lcx,
        BranchLabel::Am,
        BranchLabel::Rca,
    ];

    /// Branches of the left coronary tree used for averaged indices.
    pub const LEFT: [BranchLabel; 4] = [
        BranchLabel::Lad,
        BranchLabel::Om1,
        BranchLabel::Om2,
        BranchLabel::Lcx,
    ];

    pub const RIGHT: [BranchLabel; 2] = [BranchLabel::Am, BranchLabel::Rca];

    pub fn is_left(self) -> bool {
        Self::LEFT.contains(&self)
    }

    pub fn is_right(self) -> bool {
        Self::RIGHT.contains(&self)
    }

    /// Position in [`BranchLabel::OUTLETS`]; `None` for the trunk.
    pub fn outlet_index(self) -> Option<usize> {
        Self::OUTLETS.iter().position(|&b| b == self)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            BranchLabel::Trunk => "TRUNK",
            BranchLabel::Lad => "LAD",
            BranchLabel::Om1 => "OM1",
            BranchLabel::Om2 => "OM2",
            BranchLabel::Lcx => "LCX",
            BranchLabel::Am => "AM",
            BranchLabel::Rca => "RCA",
        }
    }
}

impl fmt::Display for BranchLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for BranchLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "TRUNK" => Ok(BranchLabel::Trunk),
            "LAD" => Ok(BranchLabel::Lad),
            "OM1" => Ok(BranchLabel::Om1),
            "OM2" => Ok(BranchLabel::Om2),
            "LCX" => Ok(BranchLabel::Lcx),
            "AM" => Ok(BranchLabel::Am),
            "RCA" => Ok(BranchLabel::Rca),
            other => Err(Error::UnknownBranch(other.to_string())),
        }
    }
}

fn is_zero(v: &f64) -> bool {
    *v == 0.0
}

/// One epicardial vessel segment. Lengths and radii in mm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub id: String,
    pub parent: Option<String>,
    #[serde(rename = "length_mm")]
    pub length: f64,
    #[serde(rename = "radius_mm")]
    pub radius: f64,
    pub label: BranchLabel,
    /// Stenosis surcharge in Pa·s/mm³.
    #[serde(default, skip_serializing_if = "is_zero")]
    pub extra_resistance: f64,
}

impl Segment {
    pub fn new(id: &str, parent: Option<&str>, length: f64, radius: f64, label: BranchLabel) -> Self {
        Segment {
            id: id.to_string(),
            parent: parent.map(str::to_string),
            length,
            radius,
            label,
            extra_resistance: 0.0,
        }
    }

    pub fn area(&self) -> f64 {
        PI * self.radius * self.radius
    }

    pub fn volume(&self) -> f64 {
        self.area() * self.length
    }
}

/// Hagen–Poiseuille resistance of a segment plus its stenosis surcharge,
/// in Pa·s/mm³.
pub fn poiseuille_resistance(segment: &Segment, viscosity: f64) -> f64 {
    healthy_resistance(segment.length, segment.radius, viscosity) + segment.extra_resistance
}

fn healthy_resistance(length: f64, radius: f64, viscosity: f64) -> f64 {
    8.0 * viscosity * length / (PI * radius.powi(4))
}

#[derive(Serialize, Deserialize)]
struct TreeFile {
    segments: Vec<Segment>,
    inlet: String,
    outlets: BTreeMap<BranchLabel, String>,
}

/// Validated epicardial tree.
#[derive(Debug, Clone, PartialEq)]
pub struct VesselTree {
    segments: Vec<Segment>,
    inlet: String,
    outlets: BTreeMap<BranchLabel, String>,
    // Derived, kept in sync by `validate`.
    parent_index: Vec<Option<usize>>,
    topo_order: Vec<usize>,
    outlet_index: [usize; 6],
}

impl VesselTree {
    pub fn new(
        segments: Vec<Segment>,
        inlet: &str,
        outlets: BTreeMap<BranchLabel, String>,
    ) -> Result<Self> {
        let mut tree = VesselTree {
            segments,
            inlet: inlet.to_string(),
            outlets,
            parent_index: Vec::new(),
            topo_order: Vec::new(),
            outlet_index: [0; 6],
        };
        tree.validate()?;
        Ok(tree)
    }

    /// Synthetic default tree: a common stem feeding the six outlet branches.
    pub fn default_tree() -> Self {
        use BranchLabel::*;
        let segments = vec![
            Segment::new("trunk", None, 20.0, 2.0, Trunk),
            Segment::new("lad", Some("trunk"), 50.0, 1.8, Lad),
            Segment::new("om1", Some("trunk"), 30.0, 1.5, Om1),
            Segment::new("om2", Some("trunk"), 30.0, 1.3, Om2),
            Segment::new("lcx", Some("trunk"), 40.0, 1.5, Lcx),
            Segment::new("am", Some("trunk"), 30.0, 1.2, Am),
            Segment::new("rca", Some("trunk"), 60.0, 2.0, Rca),
        ];
        let outlets = BranchLabel::OUTLETS
            .iter()
            .map(|&b| (b, b.as_str().to_ascii_lowercase()))
            .collect();
        VesselTree::new(segments, "trunk", outlets).expect("default tree is valid")
    }

    /// Parses and validates a JSON tree description.
    pub fn load(config_text: &str) -> Result<Self> {
        let file: TreeFile =
            serde_json::from_str(config_text).map_err(|e| Error::Parse(e.to_string()))?;
        VesselTree::new(file.segments, &file.inlet, file.outlets)
    }

    pub fn to_json(&self) -> String {
        let file = TreeFile {
            segments: self.segments.clone(),
            inlet: self.inlet.clone(),
            outlets: self.outlets.clone(),
        };
        serde_json::to_string_pretty(&file).expect("tree serializes")
    }

    fn validate(&mut self) -> Result<()> {
        let n = self.segments.len();
        if n == 0 {
            return Err(Error::Topology("tree has no segments".into()));
        }
        let mut index: HashMap<&str, usize> = HashMap::with_capacity(n);
        for (i, s) in self.segments.iter().enumerate() {
            if s.id.is_empty() {
                return Err(Error::Topology("empty segment id".into()));
            }
            if index.insert(s.id.as_str(), i).is_some() {
                return Err(Error::Topology(format!("duplicate segment id `{}`", s.id)));
            }
            if !(s.length > 0.0 && s.length.is_finite()) {
                return Err(Error::Topology(format!("segment `{}` has non-positive length", s.id)));
            }
            if !(s.radius > 0.0 && s.radius.is_finite()) {
                return Err(Error::Topology(format!("segment `{}` has non-positive radius", s.id)));
            }
            if !(s.extra_resistance >= 0.0 && s.extra_resistance.is_finite()) {
                return Err(Error::Topology(format!(
                    "segment `{}` has negative extra resistance",
                    s.id
                )));
            }
        }

        let mut parent_index = vec![None; n];
        let mut roots = Vec::new();
        for (i, s) in self.segments.iter().enumerate() {
            match &s.parent {
                None => roots.push(i),
                Some(p) => {
                    let pi = *index.get(p.as_str()).ok_or_else(|| {
                        Error::Topology(format!("segment `{}` has orphan parent `{}`", s.id, p))
                    })?;
                    parent_index[i] = Some(pi);
                }
            }
        }
        if roots.len() != 1 {
            return Err(Error::Topology(format!(
                "expected exactly one root segment, found {}",
                roots.len()
            )));
        }
        let root = roots[0];
        if self.segments[root].id != self.inlet {
            return Err(Error::Topology(format!(
                "inlet `{}` is not the root segment `{}`",
                self.inlet, self.segments[root].id
            )));
        }

        // Every segment must reach the root by following parents.
        for start in 0..n {
            let mut seen = HashSet::new();
            let mut cur = start;
            while let Some(p) = parent_index[cur] {
                if !seen.insert(cur) {
                    return Err(Error::Topology(format!(
                        "cycle through segment `{}`",
                        self.segments[start].id
                    )));
                }
                cur = p;
            }
            if cur != root {
                return Err(Error::Topology(format!(
                    "segment `{}` is not reachable from the inlet",
                    self.segments[start].id
                )));
            }
        }

        let mut children = vec![0usize; n];
        for p in parent_index.iter().flatten() {
            children[*p] += 1;
        }

        let mut labels_seen = HashSet::new();
        for s in &self.segments {
            if s.label != BranchLabel::Trunk && !labels_seen.insert(s.label) {
                return Err(Error::Topology(format!("branch label {} used twice", s.label)));
            }
        }

        let mut outlet_index = [0usize; 6];
        for (k, label) in BranchLabel::OUTLETS.iter().enumerate() {
            let id = self
                .outlets
                .get(label)
                .ok_or_else(|| Error::Topology(format!("missing outlet {label}")))?;
            let i = *index
                .get(id.as_str())
                .ok_or_else(|| Error::Topology(format!("outlet {label} names unknown segment `{id}`")))?;
            if self.segments[i].label != *label {
                return Err(Error::Topology(format!(
                    "outlet {label} points at segment `{id}` labelled {}",
                    self.segments[i].label
                )));
            }
            if children[i] != 0 {
                return Err(Error::Topology(format!("outlet segment `{id}` is not a leaf")));
            }
            outlet_index[k] = i;
        }
        if self.outlets.contains_key(&BranchLabel::Trunk) {
            return Err(Error::Topology("TRUNK cannot be an outlet".into()));
        }
        for (i, s) in self.segments.iter().enumerate() {
            if children[i] == 0 && !outlet_index.contains(&i) {
                return Err(Error::Topology(format!("leaf segment `{}` is not an outlet", s.id)));
            }
        }

        // Parents before children.
        let mut order = Vec::with_capacity(n);
        let mut stack = vec![root];
        while let Some(i) = stack.pop() {
            order.push(i);
            for (j, p) in parent_index.iter().enumerate().rev() {
                if *p == Some(i) {
                    stack.push(j);
                }
            }
        }

        self.parent_index = parent_index;
        self.topo_order = order;
        self.outlet_index = outlet_index;
        Ok(())
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn inlet(&self) -> &str {
        &self.inlet
    }

    pub fn outlets(&self) -> &BTreeMap<BranchLabel, String> {
        &self.outlets
    }

    pub fn segment_index(&self, id: &str) -> Option<usize> {
        self.segments.iter().position(|s| s.id == id)
    }

    pub fn segment(&self, id: &str) -> Option<&Segment> {
        self.segments.iter().find(|s| s.id == id)
    }

    /// Index of the inlet (root) segment.
    pub fn inlet_index(&self) -> usize {
        self.topo_order[0]
    }

    pub fn parent_of(&self, seg: usize) -> Option<usize> {
        self.parent_index[seg]
    }

    /// Segment indices with parents listed before children.
    pub fn topological_order(&self) -> &[usize] {
        &self.topo_order
    }

    /// Segment index of an outlet branch.
    pub fn outlet_segment(&self, branch: BranchLabel) -> Result<usize> {
        branch
            .outlet_index()
            .map(|k| self.outlet_index[k])
            .ok_or_else(|| Error::UnknownBranch(branch.to_string()))
    }

    /// Outlet segment indices in [`BranchLabel::OUTLETS`] order.
    pub fn outlet_segments(&self) -> [usize; 6] {
        self.outlet_index
    }

    /// Network nodes: 0 is the aortic root, `1 + i` the distal end of segment `i`.
    pub fn node_count(&self) -> usize {
        self.segments.len() + 1
    }

    pub fn proximal_node(&self, seg: usize) -> usize {
        self.parent_index[seg].map_or(0, |p| p + 1)
    }

    pub fn distal_node(&self, seg: usize) -> usize {
        seg + 1
    }

    /// Whether the segment feeds any left-tree outlet.
    pub fn feeds_left(&self, seg: usize) -> bool {
        BranchLabel::LEFT.iter().any(|&b| {
            let mut cur = Some(self.outlet_index[b.outlet_index().unwrap()]);
            while let Some(c) = cur {
                if c == seg {
                    return true;
                }
                cur = self.parent_index[c];
            }
            false
        })
    }

    pub fn resistances(&self, viscosity: f64) -> Vec<f64> {
        self.segments
            .iter()
            .map(|s| poiseuille_resistance(s, viscosity))
            .collect()
    }

    /// Narrows a segment by the given lumen-area fraction. The segment's
    /// total resistance becomes the Poiseuille value of the narrowed lumen.
    pub fn apply_stenosis(&self, segment_id: &str, area_reduction: f64, viscosity: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&area_reduction) {
            return Err(Error::Range(format!(
                "area reduction {area_reduction} outside [0, 1)"
            )));
        }
        let i = self
            .segment_index(segment_id)
            .ok_or_else(|| Error::UnknownSegment(segment_id.to_string()))?;
        let mut out = self.clone();
        let s = &mut out.segments[i];
        let healthy = healthy_resistance(s.length, s.radius, viscosity);
        let narrowed = healthy / ((1.0 - area_reduction) * (1.0 - area_reduction));
        s.extra_resistance = narrowed - healthy;
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::units::BLOOD_VISCOSITY;

    fn tree_json(mutate: impl FnOnce(&mut serde_json::Value)) -> String {
        let mut v: serde_json::Value = serde_json::from_str(&VesselTree::default_tree().to_json()).unwrap();
        mutate(&mut v);
        v.to_string()
    }

    #[test]
    fn default_tree_has_six_outlets() {
        let t = VesselTree::default_tree();
        assert_eq!(t.segments().len(), 7);
        assert_eq!(t.outlets().len(), 6);
        for b in BranchLabel::OUTLETS {
            let i = t.outlet_segment(b).unwrap();
            assert_eq!(t.segments()[i].label, b);
        }
        assert_eq!(t.inlet_index(), 0);
        assert!(t.feeds_left(0));
        assert!(!t.feeds_left(t.outlet_segment(BranchLabel::Rca).unwrap()));
    }

    #[test]
    fn json_round_trip_is_bit_exact() {
        let text = VesselTree::default_tree().to_json();
        let back = VesselTree::load(&text).unwrap();
        assert_eq!(back.to_json(), text);
        let sten = back.apply_stenosis("lad", 0.9, BLOOD_VISCOSITY).unwrap();
        let text2 = sten.to_json();
        assert_eq!(VesselTree::load(&text2).unwrap(), sten);
        assert_eq!(VesselTree::load(&text2).unwrap().to_json(), text2);
    }

    #[test]
    fn rejects_duplicate_label() {
        let text = tree_json(|v| v["segments"][2]["label"] = "LAD".into());
        assert!(matches!(VesselTree::load(&text), Err(Error::Topology(_))));
    }

    #[test]
    fn rejects_self_cycle() {
        let text = tree_json(|v| v["segments"][5]["parent"] = "am".into());
        assert!(matches!(VesselTree::load(&text), Err(Error::Topology(_))));
    }

    #[test]
    fn rejects_duplicate_id_orphan_and_missing_outlet() {
        let dup = tree_json(|v| v["segments"][2]["id"] = "lad".into());
        assert!(matches!(VesselTree::load(&dup), Err(Error::Topology(_))));
        let orphan = tree_json(|v| v["segments"][3]["parent"] = "nowhere".into());
        assert!(matches!(VesselTree::load(&orphan), Err(Error::Topology(_))));
        let missing = tree_json(|v| {
            v["outlets"].as_object_mut().unwrap().remove("AM");
        });
        assert!(matches!(VesselTree::load(&missing), Err(Error::Topology(_))));
        assert!(matches!(VesselTree::load("{not json"), Err(Error::Parse(_))));
    }

    #[test]
    fn poiseuille_values() {
        let mut s = Segment::new("s", None, 10.0, 1.5, BranchLabel::Trunk);
        let r = poiseuille_resistance(&s, 0.004);
        // 8 * 0.004 * 10 / (pi * 1.5^4)
        assert!((r - 0.020_120_33).abs() < 1e-7, "{r}");
        s.extra_resistance = 0.5;
        assert!((poiseuille_resistance(&s, 0.004) - 0.520_120_33).abs() < 1e-7);
        s.extra_resistance = 0.0;
        let mut wide = s.clone();
        wide.radius *= 2.0;
        let ratio = poiseuille_resistance(&s, 0.004) / poiseuille_resistance(&wide, 0.004);
        assert!((ratio - 16.0).abs() < 1e-12);
    }

    #[test]
    fn stenosis_scaling() {
        let t = VesselTree::default_tree();
        let same = t.apply_stenosis("lad", 0.0, BLOOD_VISCOSITY).unwrap();
        assert_eq!(same.segment("lad").unwrap().extra_resistance, 0.0);
        let i = t.segment_index("lad").unwrap();
        let healthy = poiseuille_resistance(&t.segments()[i], BLOOD_VISCOSITY);
        let sten = t.apply_stenosis("lad", 0.9, BLOOD_VISCOSITY).unwrap();
        let total = poiseuille_resistance(&sten.segments()[i], BLOOD_VISCOSITY);
        assert!((total / healthy - 100.0).abs() < 1e-9);
        assert!(matches!(
            t.apply_stenosis("nope", 0.5, BLOOD_VISCOSITY),
            Err(Error::UnknownSegment(_))
        ));
        assert!(matches!(t.apply_stenosis("lad", 1.0, BLOOD_VISCOSITY), Err(Error::Range(_))));
    }
}
