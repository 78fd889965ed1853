//! Tool declarations and the process-wide tool registry.

use std::collections::BTreeMap;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

/// One named parameter of a tool.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParameterField {
    pub name: String,
    /// Value type name ("string", "integer", ...).
    pub kind: String,
    pub description: String,
    pub required: bool,
}

/// Named fields, types, and which of them are required.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParameterSchema {
    pub fields: Vec<ParameterField>,
}

/// Resource limits enforced per tool call.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolLimits {
    pub timeout_s: f64,
    pub output_cap_bytes: usize,
}

impl Default for ToolLimits {
    fn default() -> Self {
        ToolLimits {
            timeout_s: 30.0,
            output_cap_bytes: 64 * 1024,
        }
    }
}

/// Declaration of a callable tool.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolSpec {
    pub name: String,
    pub description: String,
    pub parameter_schema: ParameterSchema,
    pub limits: ToolLimits,
}

impl ToolSpec {
    /// The built-in code interpreter tool.
    pub fn execute_code() -> ToolSpec {
        ToolSpec {
            name: "execute_code".to_string(),
            description: "Execute Python code and return stdout/stderr".to_string(),
            parameter_schema: ParameterSchema {
                fields: vec![ParameterField {
                    name: "code".to_string(),
                    kind: "string".to_string(),
                    description: "Python code to execute".to_string(),
                    required: true,
                }],
            },
            limits: ToolLimits::default(),
        }
    }
}

/// Registry of tool declarations; names are unique within a registry.
#[derive(Debug, Clone, Default)]
pub struct ToolRegistry {
    tools: BTreeMap<String, ToolSpec>,
}

impl ToolRegistry {
    pub fn empty() -> Self {
        ToolRegistry::default()
    }

    /// Registry with the built-in tools.
    pub fn standard() -> Self {
        let mut r = ToolRegistry::default();
        r.register(ToolSpec::execute_code())
            .expect("fresh registry cannot collide");
        r
    }

    /// The process-wide registry designs are resolved against.
    pub fn global() -> &'static ToolRegistry {
        static GLOBAL: OnceLock<ToolRegistry> = OnceLock::new();
        GLOBAL.get_or_init(ToolRegistry::standard)
    }

    /// Add a tool; rejects duplicates and non-positive timeouts.
    pub fn register(&mut self, spec: ToolSpec) -> Result<(), RegistryError> {
        if spec.limits.timeout_s <= 0.0 {
            return Err(RegistryError::BadTimeout { name: spec.name });
        }
        if self.tools.contains_key(&spec.name) {
            return Err(RegistryError::Duplicate { name: spec.name });
        }
        self.tools.insert(spec.name.clone(), spec);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&ToolSpec> {
        self.tools.get(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.tools.keys().map(|s| s.as_str())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum RegistryError {
    #[error("tool '{name}' is already registered")]
    Duplicate { name: String },
    #[error("tool '{name}' must have timeout > 0")]
    BadTimeout { name: String },
}
