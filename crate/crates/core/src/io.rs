//! Text formats for models and function classes.
//!
//! Both are JSON with a fixed field order. Probabilities, rewards and values
//! are written as decimal strings using the shortest representation that
//! parses back to the same `f64`, so write-read-write is byte-identical.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Decoder, PomdpParts, TabularPomdp};
use crate::oracle::{FunctionClassPair, QFunction, StepTable};
use crate::suffix::Suffix;

fn num(x: f64) -> String {
    format!("{x}")
}

fn parse(s: &str) -> Result<f64> {
    let x: f64 = s.trim().parse().map_err(|_| Error::Parse(format!("not a decimal number: {s:?}")))?;
    if !x.is_finite() {
        return Err(Error::Parse(format!("non-finite number: {s:?}")));
    }
    Ok(x)
}

fn nums(v: &[f64]) -> Vec<String> {
    v.iter().copied().map(num).collect()
}

fn parse_all(v: &[String]) -> Result<Vec<f64>> {
    v.iter().map(|s| parse(s)).collect()
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DecoderEntry {
    obs: Vec<usize>,
    actions: Vec<usize>,
    state: usize,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PomdpFile {
    #[serde(rename = "H")]
    horizon: usize,
    #[serde(rename = "m")]
    memory: usize,
    #[serde(rename = "S")]
    states: usize,
    #[serde(rename = "O")]
    observations: usize,
    #[serde(rename = "A")]
    actions: usize,
    init: Vec<String>,
    transitions: Vec<Vec<Vec<Vec<String>>>>,
    emissions: Vec<Vec<Vec<String>>>,
    rewards: Vec<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    decoder: Option<Vec<Vec<DecoderEntry>>>,
}

fn check_suffix(step: usize, memory: usize, obs: &[usize], actions: &[usize]) -> Result<Suffix> {
    if obs.len() != step.min(memory) || actions.len() + 1 != obs.len() {
        return Err(Error::Parse(format!("malformed suffix at step {step}")));
    }
    Ok(Suffix::new(step, obs.to_vec(), actions.to_vec()))
}

pub fn pomdp_to_string(pomdp: &TabularPomdp) -> String {
    let p = pomdp.to_parts();
    let file = PomdpFile {
        horizon: p.horizon,
        memory: p.memory,
        states: p.num_states,
        observations: p.num_observations,
        actions: p.num_actions,
        init: nums(&p.init),
        transitions: p
            .transitions
            .iter()
            .map(|l| l.iter().map(|s| s.iter().map(|a| nums(a)).collect()).collect())
            .collect(),
        emissions: p.emissions.iter().map(|l| l.iter().map(|s| nums(s)).collect()).collect(),
        rewards: p.rewards.iter().map(|l| nums(l)).collect(),
        decoder: p.decoder.as_ref().map(|d| {
            (1..=d.horizon())
                .map(|h| {
                    d.table(h)
                        .iter()
                        .map(|(z, &s)| DecoderEntry { obs: z.observations().to_vec(), actions: z.actions().to_vec(), state: s })
                        .collect()
                })
                .collect()
        }),
    };
    let mut out = serde_json::to_string_pretty(&file).expect("serializable");
    out.push('\n');
    out
}

pub fn pomdp_from_str(text: &str) -> Result<TabularPomdp> {
    let f: PomdpFile = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    let decoder = match f.decoder {
        None => None,
        Some(steps) => {
            let mut tables = Vec::with_capacity(steps.len());
            for (i, entries) in steps.iter().enumerate() {
                let mut t = BTreeMap::new();
                for e in entries {
                    t.insert(check_suffix(i + 1, f.memory, &e.obs, &e.actions)?, e.state);
                }
                tables.push(t);
            }
            Some(Decoder::new(f.memory, tables))
        }
    };
    TabularPomdp::new(PomdpParts {
        horizon: f.horizon,
        memory: f.memory,
        num_states: f.states,
        num_observations: f.observations,
        num_actions: f.actions,
        init: parse_all(&f.init)?,
        transitions: f
            .transitions
            .iter()
            .map(|l| l.iter().map(|s| s.iter().map(|a| parse_all(a)).collect()).collect())
            .collect::<Result<_>>()?,
        emissions: f
            .emissions
            .iter()
            .map(|l| l.iter().map(|s| parse_all(s)).collect())
            .collect::<Result<_>>()?,
        rewards: f.rewards.iter().map(|l| parse_all(l)).collect::<Result<_>>()?,
        decoder,
    })
}

pub fn write_pomdp(path: impl AsRef<Path>, pomdp: &TabularPomdp) -> Result<()> {
    std::fs::write(path, pomdp_to_string(pomdp))?;
    Ok(())
}

pub fn read_pomdp(path: impl AsRef<Path>) -> Result<TabularPomdp> {
    pomdp_from_str(&std::fs::read_to_string(path)?)
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TableEntry {
    obs: Vec<usize>,
    actions: Vec<usize>,
    values: Vec<String>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FunctionEntry {
    name: String,
    tables: Vec<Vec<TableEntry>>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ClassFile {
    horizon: usize,
    memory: usize,
    num_actions: usize,
    functions: Vec<FunctionEntry>,
    auxiliary: Vec<FunctionEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    realizable: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    complete: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    qstar_index: Option<usize>,
}

fn function_entry(f: &QFunction) -> FunctionEntry {
    FunctionEntry {
        name: f.name().to_string(),
        tables: f
            .tables()
            .iter()
            .map(|t| {
                t.iter()
                    .map(|(z, v)| TableEntry { obs: z.observations().to_vec(), actions: z.actions().to_vec(), values: nums(v) })
                    .collect()
            })
            .collect(),
    }
}

fn function_from_entry(e: &FunctionEntry, horizon: usize, memory: usize, num_actions: usize) -> Result<QFunction> {
    if e.tables.len() != horizon {
        return Err(Error::Parse(format!("function {} has {} tables, expected {horizon}", e.name, e.tables.len())));
    }
    let mut tables = Vec::with_capacity(horizon);
    for (i, entries) in e.tables.iter().enumerate() {
        let mut t = StepTable::new();
        for entry in entries {
            t.insert(check_suffix(i + 1, memory, &entry.obs, &entry.actions)?, parse_all(&entry.values)?);
        }
        tables.push(t);
    }
    QFunction::new(e.name.clone(), memory, num_actions, tables)
}

pub fn class_to_string(classes: &FunctionClassPair) -> String {
    let first = &classes.functions()[0];
    let file = ClassFile {
        horizon: first.horizon(),
        memory: first.memory(),
        num_actions: first.num_actions(),
        functions: classes.functions().iter().map(function_entry).collect(),
        auxiliary: classes.auxiliary().iter().map(function_entry).collect(),
        realizable: classes.realizable(),
        complete: classes.complete(),
        qstar_index: classes.qstar_index(),
    };
    let mut out = serde_json::to_string_pretty(&file).expect("serializable");
    out.push('\n');
    out
}

pub fn class_from_str(text: &str) -> Result<FunctionClassPair> {
    let f: ClassFile = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    let load = |v: &[FunctionEntry]| {
        v.iter()
            .map(|e| function_from_entry(e, f.horizon, f.memory, f.num_actions))
            .collect::<Result<Vec<_>>>()
    };
    let mut pair = FunctionClassPair::new(load(&f.functions)?, load(&f.auxiliary)?)?;
    if f.qstar_index.is_some_and(|i| i >= pair.len_f()) {
        return Err(Error::Parse("qstar_index out of range".into()));
    }
    pair.set_flags(f.realizable, f.complete, f.qstar_index);
    Ok(pair)
}

pub fn write_class(path: impl AsRef<Path>, classes: &FunctionClassPair) -> Result<()> {
    std::fs::write(path, class_to_string(classes))?;
    Ok(())
}

pub fn read_class(path: impl AsRef<Path>) -> Result<FunctionClassPair> {
    class_from_str(&std::fs::read_to_string(path)?)
}
