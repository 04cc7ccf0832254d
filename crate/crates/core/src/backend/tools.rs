//! Minimal tool dispatch for the Think–Act–Observe loop. Tool failures and
//! unknown tool names become error-text observations the agent can read; they
//! never abort a trajectory.

use std::collections::BTreeMap;
use std::path::Path;

pub trait Tool: Send + Sync {
    fn name(&self) -> &str;
    fn call(&self, arguments: &str) -> Result<String, String>;
}

/// Returns its argument unchanged.
pub struct EchoTool;

impl Tool for EchoTool {
    fn name(&self) -> &str {
        "echo"
    }

    fn call(&self, arguments: &str) -> Result<String, String> {
        Ok(arguments.to_string())
    }
}

/// Key-value lookup over a fixed table, typically seeded from a fixture file.
pub struct LookupTool {
    table: BTreeMap<String, String>,
}

impl LookupTool {
    pub fn new(table: BTreeMap<String, String>) -> Self {
        Self { table }
    }
}

impl Tool for LookupTool {
    fn name(&self) -> &str {
        "lookup"
    }

    fn call(&self, arguments: &str) -> Result<String, String> {
        let key = arguments.trim();
        self.table
            .get(key)
            .cloned()
            .ok_or_else(|| format!("no entry for key `{key}`"))
    }
}

#[derive(Default)]
pub struct ToolRegistry {
    tools: BTreeMap<String, Box<dyn Tool>>,
}

impl ToolRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registry with the built-in echo and lookup tools.
    pub fn with_builtins(lookup_table: BTreeMap<String, String>) -> Self {
        let mut registry = Self::new();
        registry.register(Box::new(EchoTool));
        registry.register(Box::new(LookupTool::new(lookup_table)));
        registry
    }

    /// Built-in registry whose lookup table comes from a JSON fixture file
    /// (a flat string-to-string map).
    pub fn from_fixture_file(path: impl AsRef<Path>) -> std::io::Result<Self> {
        let data = std::fs::read_to_string(path.as_ref())?;
        let table: BTreeMap<String, String> = serde_json::from_str(&data)
            .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))?;
        Ok(Self::with_builtins(table))
    }

    pub fn register(&mut self, tool: Box<dyn Tool>) {
        self.tools.insert(tool.name().to_string(), tool);
    }

    /// Dispatches a tool call and returns the observation text. Total: an
    /// unknown name or a failing tool yields an `ERROR:` observation.
    pub fn execute(&self, name: &str, arguments: &str) -> String {
        match self.tools.get(name) {
            None => format!("ERROR: unknown tool `{name}`"),
            Some(tool) => match tool.call(arguments) {
                Ok(observation) => observation,
                Err(message) => format!("ERROR: tool `{name}` failed: {message}"),
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn registry() -> ToolRegistry {
        let mut table = BTreeMap::new();
        table.insert("capital_of_france".to_string(), "Paris".to_string());
        ToolRegistry::with_builtins(table)
    }

    #[test]
    fn echo_returns_its_argument() {
        assert_eq!(registry().execute("echo", "abc"), "abc");
    }

    #[test]
    fn lookup_reads_the_fixture_table() {
        assert_eq!(registry().execute("lookup", "capital_of_france"), "Paris");
    }

    #[test]
    fn unknown_tool_becomes_an_error_observation() {
        let observation = registry().execute("no_such_tool", "whatever");
        assert!(observation.starts_with("ERROR: unknown tool"));
    }

    #[test]
    fn failing_tool_becomes_an_error_observation() {
        let observation = registry().execute("lookup", "missing_key");
        assert!(observation.starts_with("ERROR: tool `lookup` failed"));
    }
}
