//! Class-mapping tables and their text config format.
//!
//! A mapping config is UTF-8 text with `#` comments:
//!
//! ```text
//! name = kitti-to-poss
//! raw_name = target_name        # one entry per line, "ignore" drops the class
//! ...
//! [classes]                     # ordered block, defines target indices 0..C
//! person
//! ...
//! [ids]                         # optional: numeric raw ids for label files
//! raw_name = 10
//! ```

use std::collections::BTreeMap;

use crate::error::{Error, Result};

/// Sentinel class index for points excluded from losses and metrics.
/// Deliberately outside every valid `[0, C)` range.
pub const IGNORE: u32 = u32::MAX;

/// Per-point class indices in `[0, C)` or [`IGNORE`].
#[derive(Debug, Clone, PartialEq)]
pub struct LabelArray {
    pub labels: Vec<u32>,
    pub num_classes: u32,
}

impl LabelArray {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Total mapping from raw source-class identifiers to dense target indices.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassMapping {
    pub name: String,
    /// Ordered target class names; position = class index.
    pub class_names: Vec<String>,
    /// raw name -> target index or IGNORE.
    entries: BTreeMap<String, u32>,
    /// numeric raw id -> target index or IGNORE (for binary label files).
    id_entries: BTreeMap<u16, u32>,
    /// numeric raw id -> raw name, from the [ids] block.
    id_names: BTreeMap<u16, String>,
}

impl ClassMapping {
    pub fn num_classes(&self) -> u32 {
        self.class_names.len() as u32
    }

    /// Map a raw class name. Names absent from the table map to IGNORE.
    pub fn map_name(&self, raw: &str) -> u32 {
        self.entries.get(raw).copied().unwrap_or(IGNORE)
    }

    /// Map a numeric raw id. Ids absent from the table map to IGNORE.
    pub fn map_id(&self, raw: u16) -> u32 {
        self.id_entries.get(&raw).copied().unwrap_or(IGNORE)
    }

    /// Numeric raw id for a raw class name, if declared.
    pub fn raw_id(&self, raw: &str) -> Option<u16> {
        self.id_names.iter().find_map(|(&id, n)| (n == raw).then_some(id))
    }

    /// Raw names in sorted order.
    pub fn raw_names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(|s| s.as_str())
    }
}

/// Parse a mapping config.
pub fn load_class_mapping(text: &str) -> Result<ClassMapping> {
    #[derive(PartialEq)]
    enum Section {
        Top,
        Classes,
        Ids,
    }

    let mut name = String::new();
    let mut raw_entries: Vec<(String, String)> = Vec::new();
    let mut class_names: Vec<String> = Vec::new();
    let mut id_lines: Vec<(String, u16)> = Vec::new();
    let mut section = Section::Top;

    for (lineno, raw_line) in text.lines().enumerate() {
        let line = raw_line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if let Some(header) = line.strip_prefix('[') {
            let header = header.strip_suffix(']').ok_or_else(|| {
                Error::ConfigError(format!("line {}: unterminated section header", lineno + 1))
            })?;
            section = match header {
                "classes" => Section::Classes,
                "ids" => Section::Ids,
                other => {
                    return Err(Error::ConfigError(format!(
                        "line {}: unknown section [{other}]",
                        lineno + 1
                    )))
                }
            };
            continue;
        }
        match section {
            Section::Top => {
                let (key, value) = split_kv(line, lineno)?;
                if key == "name" {
                    name = value.to_string();
                } else {
                    raw_entries.push((key.to_string(), value.to_string()));
                }
            }
            Section::Classes => class_names.push(line.to_string()),
            Section::Ids => {
                let (key, value) = split_kv(line, lineno)?;
                let id = value.parse::<u16>().map_err(|_| {
                    Error::ConfigError(format!("line {}: bad raw id '{value}'", lineno + 1))
                })?;
                id_lines.push((key.to_string(), id));
            }
        }
    }

    build_mapping(name, raw_entries, class_names, id_lines)
}

fn split_kv(line: &str, lineno: usize) -> Result<(&str, &str)> {
    let mut parts = line.splitn(2, '=');
    let key = parts.next().unwrap_or("").trim();
    let value = parts.next().map(str::trim).ok_or_else(|| {
        Error::ConfigError(format!("line {}: expected 'key = value'", lineno + 1))
    })?;
    if key.is_empty() || value.is_empty() {
        return Err(Error::ConfigError(format!("line {}: empty key or value", lineno + 1)));
    }
    Ok((key, value))
}

fn build_mapping(
    name: String,
    raw_entries: Vec<(String, String)>,
    class_names: Vec<String>,
    id_lines: Vec<(String, u16)>,
) -> Result<ClassMapping> {
    if class_names.is_empty() {
        return Err(Error::InvalidMapping("missing [classes] block".into()));
    }
    let mut index_of = BTreeMap::new();
    for (i, c) in class_names.iter().enumerate() {
        if index_of.insert(c.clone(), i as u32).is_some() {
            return Err(Error::InvalidMapping(format!("class '{c}' declared twice")));
        }
    }

    let mut entries = BTreeMap::new();
    for (raw, target) in raw_entries {
        let idx = if target == "ignore" {
            IGNORE
        } else {
            *index_of
                .get(&target)
                .ok_or_else(|| Error::InvalidMapping(format!("unknown target class '{target}'")))?
        };
        if entries.insert(raw.clone(), idx).is_some() {
            return Err(Error::DuplicateMapping(raw));
        }
    }

    let mut id_entries = BTreeMap::new();
    let mut id_names = BTreeMap::new();
    for (raw, id) in id_lines {
        let target = *entries
            .get(&raw)
            .ok_or_else(|| Error::InvalidMapping(format!("[ids] names unmapped class '{raw}'")))?;
        if id_entries.insert(id, target).is_some() {
            return Err(Error::DuplicateMapping(format!("raw id {id}")));
        }
        id_names.insert(id, raw);
    }

    Ok(ClassMapping { name, class_names, entries, id_entries, id_names })
}

macro_rules! builtin_table {
    ($($key:literal => $file:literal),+ $(,)?) => {
        pub const BUILTIN_MAPPINGS: &[(&str, &str)] = &[
            $(($key, include_str!(concat!("../../configs/", $file)))),+
        ];
    };
}

builtin_table! {
    "kitti-to-nuscenes" => "kitti-to-nuscenes.map",
    "nuscenes-lidarseg" => "nuscenes-lidarseg.map",
    "kitti-to-poss" => "kitti-to-poss.map",
    "poss" => "poss.map",
    "synthetic-6" => "synthetic-6.map",
}

impl ClassMapping {
    /// One of the shipped mapping configs, by name.
    pub fn builtin(name: &str) -> Result<ClassMapping> {
        let text = BUILTIN_MAPPINGS
            .iter()
            .find_map(|&(k, v)| (k == name).then_some(v))
            .ok_or_else(|| Error::ConfigError(format!("unknown builtin mapping '{name}'")))?;
        load_class_mapping(text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kitti_to_nuscenes_maps_parking_to_driveable_surface() {
        let m = ClassMapping::builtin("kitti-to-nuscenes").unwrap();
        let idx = m.map_name("parking");
        assert_eq!(m.class_names[idx as usize], "driveable-surface");
    }

    #[test]
    fn kitti_to_poss_has_12_classes_and_bike_row() {
        let m = ClassMapping::builtin("kitti-to-poss").unwrap();
        assert_eq!(m.num_classes(), 12);
        assert_eq!(m.class_names[m.map_name("bicycle") as usize], "bike");
        assert_eq!(m.map_name("other-structure"), IGNORE);
    }

    #[test]
    fn numeric_ids_follow_name_entries() {
        let m = ClassMapping::builtin("kitti-to-poss").unwrap();
        // raw id 11 is "bicycle"
        assert_eq!(m.map_id(11), m.map_name("bicycle"));
        assert_eq!(m.map_id(52), IGNORE); // other-structure
        assert_eq!(m.map_id(9999), IGNORE); // undeclared id
    }

    #[test]
    fn duplicate_raw_name_is_rejected() {
        let text = "name = t\ncar = a\ncar = b\n[classes]\na\nb\n";
        assert!(matches!(load_class_mapping(text), Err(Error::DuplicateMapping(_))));
    }

    #[test]
    fn unknown_target_class_is_rejected() {
        let text = "name = t\ncar = nosuch\n[classes]\na\n";
        assert!(matches!(load_class_mapping(text), Err(Error::InvalidMapping(_))));
    }

    #[test]
    fn duplicate_class_declaration_is_rejected() {
        let text = "name = t\ncar = a\n[classes]\na\na\n";
        assert!(matches!(load_class_mapping(text), Err(Error::InvalidMapping(_))));
    }
}
