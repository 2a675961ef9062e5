//! Tab-separated input files.
//!
//! Every format skips blank lines and lines starting with `#`. A trailing
//! carriage return is ignored so files written on Windows load unchanged.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use kgdenoise_core::kg::{KgBuilder, KgError, KnowledgeGraph, Label, LinkExample, SmoothClass, SmoothingMap, TaskMode, UnmappedPolicy};

#[derive(Debug, thiserror::Error)]
pub enum FormatError {
    #[error("{origin}:{line}: {msg}")]
    Parse { origin: String, line: usize, msg: String },
    #[error("{origin}:{line}: {source}")]
    Kg {
        origin: String,
        line: usize,
        #[source]
        source: KgError,
    },
}

fn records<'a>(src: &'a str) -> impl Iterator<Item = (usize, Vec<&'a str>)> + 'a {
    src.lines().enumerate().filter_map(|(i, raw)| {
        let line = raw.strip_suffix('\r').unwrap_or(raw);
        if line.trim().is_empty() || line.starts_with('#') {
            None
        } else {
            Some((i + 1, line.split('\t').collect()))
        }
    })
}

fn fields<'a, const N: usize>(origin: &str, line: usize, parts: &[&'a str]) -> Result<[&'a str; N], FormatError> {
    <[&str; N]>::try_from(parts).map_err(|_| FormatError::Parse {
        origin: origin.to_string(),
        line,
        msg: format!("expected {N} tab-separated fields, found {}", parts.len()),
    })
}

/// `entity<TAB>type` lines into `builder`.
pub fn parse_types(builder: &mut KgBuilder, src: &str, origin: &str) -> Result<usize, FormatError> {
    let mut n = 0;
    for (line, parts) in records(src) {
        let [entity, ty] = fields(origin, line, &parts)?;
        builder
            .typed_entity(entity, ty)
            .map_err(|source| FormatError::Kg { origin: origin.to_string(), line, source })?;
        n += 1;
    }
    Ok(n)
}

/// `head<TAB>relation<TAB>tail` lines into `builder`. Returns the number of
/// distinct triples added; duplicates are dropped.
pub fn parse_triples(builder: &mut KgBuilder, src: &str, origin: &str) -> Result<usize, FormatError> {
    let mut n = 0;
    for (line, parts) in records(src) {
        let [h, r, t] = fields(origin, line, &parts)?;
        let added = builder
            .add_named(h, r, t)
            .map_err(|source| FormatError::Kg { origin: origin.to_string(), line, source })?;
        n += usize::from(added);
    }
    Ok(n)
}

/// `relation<TAB>{positive|interaction|negative}` lines.
pub fn parse_smoothing(src: &str, origin: &str, unmapped: UnmappedPolicy) -> Result<SmoothingMap, FormatError> {
    let mut map = SmoothingMap::new(unmapped);
    for (line, parts) in records(src) {
        let [rel, class] = fields(origin, line, &parts)?;
        let class = SmoothClass::parse(class.trim()).ok_or_else(|| FormatError::Parse {
            origin: origin.to_string(),
            line,
            msg: format!("unknown smoothing class {class:?}"),
        })?;
        map.insert(rel, class);
    }
    Ok(map)
}

/// Parsed `links.tsv`.
#[derive(Clone, Debug, PartialEq)]
pub struct LinkTable {
    pub examples: Vec<LinkExample>,
    /// Class names in index order; empty for binary tasks.
    pub class_names: Vec<String>,
}

impl LinkTable {
    pub fn num_classes(&self, task: TaskMode) -> usize {
        match task {
            TaskMode::Binary => 1,
            _ => self.class_names.len(),
        }
    }
}

/// `head<TAB>tail<TAB>label` lines. Binary labels are `0` or `1`; multi-class
/// labels are a class name; multi-label labels are `;`-joined class names,
/// with an empty field for a pair holding none. Class indices follow sorted
/// class names. `known_classes` pins the class list, e.g. when evaluating a
/// checkpoint.
pub fn parse_links(
    kg: &KnowledgeGraph,
    src: &str,
    origin: &str,
    task: TaskMode,
    known_classes: Option<&[String]>,
) -> Result<LinkTable, FormatError> {
    let err = |line: usize, msg: String| FormatError::Parse { origin: origin.to_string(), line, msg };
    let rows: Vec<(usize, [&str; 3])> = records(src)
        .map(|(line, parts)| {
            // a multi-label negative ends in an empty field
            let parts = if parts.len() == 2 { vec![parts[0], parts[1], ""] } else { parts };
            fields::<3>(origin, line, &parts).map(|f| (line, f))
        })
        .collect::<Result<_, _>>()?;
    let split = |label: &str| -> Vec<String> {
        label.split(';').map(str::trim).filter(|s| !s.is_empty()).map(String::from).collect()
    };
    let class_names: Vec<String> = match (task, known_classes) {
        (TaskMode::Binary, _) => Vec::new(),
        (_, Some(names)) => names.to_vec(),
        (_, None) => {
            let mut set = BTreeSet::new();
            for (_, [_, _, label]) in &rows {
                set.extend(split(label));
            }
            set.into_iter().collect()
        }
    };
    let class_index = |line: usize, name: &str| -> Result<u32, FormatError> {
        class_names
            .iter()
            .position(|c| c == name)
            .map(|i| i as u32)
            .ok_or_else(|| err(line, format!("unknown class {name:?}")))
    };
    let mut examples = Vec::with_capacity(rows.len());
    for (line, [h, t, label]) in rows {
        let entity = |name: &str| {
            kg.entity_id(name)
                .ok_or_else(|| FormatError::Kg { origin: origin.to_string(), line, source: KgError::UnknownEntity(name.to_string()) })
        };
        let (head, tail) = (entity(h)?, entity(t)?);
        let label = label.trim();
        let label = match task {
            TaskMode::Binary => match label {
                "1" => Label::Binary(true),
                "0" => Label::Binary(false),
                other => return Err(err(line, format!("binary label must be 0 or 1, found {other:?}"))),
            },
            TaskMode::MultiClass => {
                if label.is_empty() || label.contains(';') {
                    return Err(err(line, format!("multi-class label must name one class, found {label:?}")));
                }
                Label::Class(class_index(line, label)?)
            }
            TaskMode::MultiLabel => {
                Label::multi(split(label).iter().map(|c| class_index(line, c)).collect::<Result<_, _>>()?)
            }
        };
        examples.push(LinkExample::new(head, tail, label));
    }
    Ok(LinkTable { examples, class_names })
}

/// `head_type<TAB>r1;r2;…<TAB>tail_type` lines. A step written `~r`
/// follows `r` against its direction.
pub fn parse_metapaths(src: &str, origin: &str) -> Result<Vec<(String, String, String)>, FormatError> {
    records(src)
        .map(|(line, parts)| {
            let [h, steps, t] = fields(origin, line, &parts)?;
            if steps.trim().is_empty() {
                return Err(FormatError::Parse { origin: origin.to_string(), line, msg: "empty metapath".into() });
            }
            Ok((h.to_string(), steps.to_string(), t.to_string()))
        })
        .collect()
}

pub fn format_triples(kg: &KnowledgeGraph) -> String {
    let mut out = String::new();
    for t in kg.triples() {
        let _ = writeln!(out, "{}\t{}\t{}", kg.entity_name(t.head), kg.relation_name(t.relation), kg.entity_name(t.tail));
    }
    out
}

pub fn format_types(kg: &KnowledgeGraph) -> String {
    let mut out = String::new();
    for e in kg.entity_ids() {
        if let Some(t) = kg.entity_type(e) {
            let _ = writeln!(out, "{}\t{}", kg.entity_name(e), kg.type_name(t));
        }
    }
    out
}

pub fn format_smoothing(map: &SmoothingMap) -> String {
    let mut out = String::new();
    for (rel, class) in &map.classes {
        let _ = writeln!(out, "{rel}\t{}", class.name());
    }
    out
}

pub fn format_links(kg: &KnowledgeGraph, examples: &[LinkExample], class_names: &[String]) -> String {
    let mut out = String::new();
    for ex in examples {
        let label = match &ex.label {
            Label::Binary(b) => String::from(if *b { "1" } else { "0" }),
            Label::Class(c) => class_names[*c as usize].clone(),
            Label::Multi(cs) => cs.iter().map(|&c| class_names[c as usize].as_str()).collect::<Vec<_>>().join(";"),
        };
        let _ = writeln!(out, "{}\t{}\t{label}", kg.entity_name(ex.head), kg.entity_name(ex.tail));
    }
    out
}
