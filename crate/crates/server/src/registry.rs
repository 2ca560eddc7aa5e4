//! Named, versioned service endpoints.

use std::collections::BTreeMap;

use parking_lot::RwLock;
use semver::Version;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ServiceDescriptor {
    pub name: String,
    #[serde(serialize_with = "version_string")]
    pub version: Version,
    pub endpoint: String,
    pub description: String,
}

fn version_string<S: serde::Serializer>(v: &Version, s: S) -> Result<S::Ok, S::Error> {
    s.collect_str(v)
}

impl ServiceDescriptor {
    /// Panics if `version` is not a semantic version.
    pub fn new(name: &str, version: &str, endpoint: &str, description: &str) -> ServiceDescriptor {
        ServiceDescriptor {
            name: name.to_string(),
            version: Version::parse(version).expect("valid semantic version"),
            endpoint: endpoint.to_string(),
            description: description.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("service {name} {version} is already registered")]
pub struct DuplicateRegistration {
    pub name: String,
    pub version: Version,
}

#[derive(Debug, Default)]
pub struct ServiceRegistry {
    services: RwLock<BTreeMap<String, BTreeMap<Version, ServiceDescriptor>>>,
}

impl ServiceRegistry {
    pub fn new() -> ServiceRegistry {
        ServiceRegistry::default()
    }

    /// The services this crate's HTTP API offers.
    pub fn builtin() -> ServiceRegistry {
        let r = ServiceRegistry::new();
        for d in [
            ServiceDescriptor::new("services", "1.0.0", "/services", "Service registry snapshot"),
            ServiceDescriptor::new("workorder", "1.0.0", "/work-orders", "Create, list and fetch work orders"),
            ServiceDescriptor::new("tasks", "1.0.0", "/tasks", "Manual work-center task queue"),
            ServiceDescriptor::new("reports", "1.0.0", "/reports", "Turnaround, pending and completion reports"),
            ServiceDescriptor::new("warehouse", "1.0.0", "/warehouse/query", "Ad hoc warehouse aggregation"),
        ] {
            r.register(d).expect("builtin services are distinct");
        }
        r
    }

    pub fn register(&self, d: ServiceDescriptor) -> Result<(), DuplicateRegistration> {
        let mut services = self.services.write();
        let versions = services.entry(d.name.clone()).or_default();
        if versions.contains_key(&d.version) {
            return Err(DuplicateRegistration { name: d.name, version: d.version });
        }
        versions.insert(d.version.clone(), d);
        Ok(())
    }

    /// Every version of `name`, newest first.
    pub fn lookup(&self, name: &str) -> Vec<ServiceDescriptor> {
        self.services.read().get(name).map(|v| v.values().rev().cloned().collect()).unwrap_or_default()
    }

    /// All services by name, each newest first.
    pub fn snapshot(&self) -> Vec<ServiceDescriptor> {
        self.services.read().values().flat_map(|v| v.values().rev().cloned()).collect()
    }
}
