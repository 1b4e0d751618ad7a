//! Applying command-line flags on top of configuration files. Every flag that
//! is given is reported on stderr, with the configured value it replaces.

use std::fmt::Display;

use faith_core::{AuditConfig, BootstrapConfig, SimulationSpec};

use crate::Tuning;

fn apply<T: PartialEq + Display + Copy>(flag: &str, slot: &mut T, value: Option<T>) {
    let Some(value) = value else { return };
    if *slot == value {
        eprintln!("faith: --{flag} {value} (same as config)");
    } else {
        eprintln!("faith: --{flag} {value} overrides config value {slot}");
    }
    *slot = value;
}

fn apply_bootstrap(cfg: &mut BootstrapConfig, tuning: &Tuning) {
    if let Some(method) = tuning.method {
        let method = method.into();
        if cfg.method == method {
            eprintln!("faith: --method {method:?} (same as config)");
        } else {
            eprintln!("faith: --method {method:?} overrides config value {:?}", cfg.method);
        }
        cfg.method = method;
    }
    apply("B", &mut cfg.replicates, tuning.replicates);
}

pub fn audit_config(config: &mut AuditConfig, tuning: &Tuning) {
    apply("seed", &mut config.seed, tuning.seed);
    apply("alpha", &mut config.alpha, tuning.alpha);
    apply("delta", &mut config.delta, tuning.delta);
    apply("epsilon", &mut config.epsilon, tuning.epsilon);
    apply_bootstrap(&mut config.bootstrap, tuning);
}

pub fn simulation_spec(spec: &mut SimulationSpec, tuning: &Tuning) {
    apply("seed", &mut spec.seed, tuning.seed);
    apply("alpha", &mut spec.alpha, tuning.alpha);
    if let Some(delta) = tuning.delta {
        match spec.delta {
            Some(old) if old == delta => eprintln!("faith: --delta {delta} (same as config)"),
            Some(old) => eprintln!("faith: --delta {delta} overrides config value {old}"),
            None => eprintln!("faith: --delta {delta} (not set in config)"),
        }
        spec.delta = Some(delta);
    }
    apply("epsilon", &mut spec.instance.epsilon, tuning.epsilon);
    apply_bootstrap(&mut spec.bootstrap, tuning);
}
