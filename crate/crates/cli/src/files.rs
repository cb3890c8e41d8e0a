//! Instance and allocation file formats (JSON).

use serde::{Deserialize, Serialize};
use serde_json::Value;

use eefx_core::{Allocation, ExactValue, Instance, ItemSet};

use crate::CliError;

pub const SCHEMA_VERSION: u32 = 1;

/// On-disk instance. Valuations are JSON integers or strings holding an integer, a
/// fraction `"a/b"` or a decimal `"0.25"`; all are read exactly.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceFile {
    pub schema_version: u32,
    pub agents: usize,
    pub items: usize,
    pub valuations: Vec<Vec<Value>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub agent_labels: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub item_labels: Option<Vec<String>>,
}

fn parse_value(v: &Value, agent: usize, item: usize) -> Result<ExactValue, CliError> {
    let at = || format!("valuation of agent {} for item {}", agent + 1, item + 1);
    let parsed = match v {
        Value::Number(n) if n.is_i64() || n.is_u64() => n.to_string().parse::<ExactValue>(),
        Value::Number(_) => {
            return Err(CliError::parse(format!("{}: write non-integers as strings, e.g. \"0.5\" or \"1/2\"", at())))
        }
        Value::String(s) => s.parse::<ExactValue>(),
        _ => return Err(CliError::parse(format!("{}: expected a number or string", at()))),
    };
    let value = parsed.map_err(|e| CliError::parse(format!("{}: {e}", at())))?;
    if value.is_negative() {
        return Err(CliError::parse(format!("{}: negative values are not allowed", at())));
    }
    Ok(value)
}

fn render_value(v: &ExactValue) -> Value {
    match v.to_string().parse::<u64>() {
        Ok(n) => Value::from(n),
        Err(_) => Value::from(v.to_string()),
    }
}

impl InstanceFile {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::parse(format!("instance file: {e}")))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("instance file serializes") + "\n"
    }

    pub fn from_instance(inst: &Instance) -> Self {
        InstanceFile {
            schema_version: SCHEMA_VERSION,
            agents: inst.n(),
            items: inst.m(),
            valuations: inst.values().iter().map(|row| row.iter().map(render_value).collect()).collect(),
            label: inst.label().map(str::to_string),
            agent_labels: None,
            item_labels: None,
        }
    }

    pub fn to_instance(&self) -> Result<Instance, CliError> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(CliError::parse(format!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        if self.valuations.len() != self.agents {
            return Err(CliError::parse(format!(
                "agents = {} but {} valuation rows given",
                self.agents,
                self.valuations.len()
            )));
        }
        if let Some(bad) = self.valuations.iter().position(|r| r.len() != self.items) {
            return Err(CliError::parse(format!(
                "row {} has {} entries, expected items = {}",
                bad + 1,
                self.valuations[bad].len(),
                self.items
            )));
        }
        if self.agent_labels.as_ref().is_some_and(|l| l.len() != self.agents) {
            return Err(CliError::parse("agent_labels must have one entry per agent"));
        }
        if self.item_labels.as_ref().is_some_and(|l| l.len() != self.items) {
            return Err(CliError::parse("item_labels must have one entry per item"));
        }
        let rows = self
            .valuations
            .iter()
            .enumerate()
            .map(|(i, row)| row.iter().enumerate().map(|(g, v)| parse_value(v, i, g)).collect())
            .collect::<Result<Vec<Vec<ExactValue>>, _>>()?;
        let inst = Instance::new(rows).map_err(CliError::from)?;
        Ok(match &self.label {
            Some(l) => inst.with_label(l.clone()),
            None => inst,
        })
    }
}

/// On-disk allocation: one list of 1-based item numbers per agent.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AllocationFile {
    pub schema_version: u32,
    pub bundles: Vec<Vec<usize>>,
}

impl AllocationFile {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::parse(format!("allocation file: {e}")))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("allocation file serializes") + "\n"
    }

    pub fn from_bundles(bundles: &[ItemSet]) -> Self {
        AllocationFile { schema_version: SCHEMA_VERSION, bundles: bundles.iter().map(|b| b.to_one_based()).collect() }
    }

    pub fn to_allocation(&self, inst: &Instance) -> Result<Allocation, CliError> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(CliError::parse(format!("unsupported schema_version {}", self.schema_version)));
        }
        let mut bundles = Vec::with_capacity(self.bundles.len());
        for (j, items) in self.bundles.iter().enumerate() {
            let mut b = ItemSet::EMPTY;
            for &g in items {
                if g == 0 || g > inst.m() {
                    return Err(CliError::parse(format!("agent {}: item {g} is not in 1..={}", j + 1, inst.m())));
                }
                if b.contains(g - 1) {
                    return Err(CliError::parse(format!("agent {}: item {g} listed twice", j + 1)));
                }
                b = b.with(g - 1);
            }
            bundles.push(b);
        }
        Allocation::new(inst, bundles).map_err(CliError::from)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_mixed_values() {
        let f = InstanceFile::from_json(
            r#"{"schema_version":1,"agents":2,"items":2,"valuations":[[1,"1/2"],["0.25","3"]]}"#,
        )
        .unwrap();
        let inst = f.to_instance().unwrap();
        assert_eq!(*inst.item_value(0, 1), ExactValue::from_ratio(1, 2));
        assert_eq!(*inst.item_value(1, 0), ExactValue::from_ratio(1, 4));
        let back = InstanceFile::from_instance(&inst);
        assert_eq!(back.to_instance().unwrap().values(), inst.values());
    }

    #[test]
    fn rejects_bad_instances() {
        for text in [
            r#"{"schema_version":1,"agents":1,"items":2,"valuations":[[1,-2]]}"#,
            r#"{"schema_version":1,"agents":2,"items":2,"valuations":[[1,2],[3]]}"#,
            r#"{"schema_version":1,"agents":1,"items":1,"valuations":[[0.5]]}"#,
            r#"{"schema_version":2,"agents":1,"items":1,"valuations":[[1]]}"#,
        ] {
            let r = InstanceFile::from_json(text).and_then(|f| f.to_instance());
            assert_eq!(r.unwrap_err().code, crate::EXIT_PARSE, "{text}");
        }
    }

    #[test]
    fn allocation_round_trip() {
        let inst = Instance::from_integers(&[[1, 2, 3], [3, 2, 1]]).unwrap();
        let f = AllocationFile { schema_version: 1, bundles: vec![vec![1, 3], vec![2]] };
        let a = f.to_allocation(&inst).unwrap();
        assert_eq!(AllocationFile::from_bundles(a.bundles()), f);
        let bad = AllocationFile { schema_version: 1, bundles: vec![vec![1], vec![1]] };
        assert!(bad.to_allocation(&inst).is_err());
    }
}
