#![allow(dead_code)]

use rttc_core::kb::KnowledgeBase;
use rttc_core::model::{HashEmbedder, RewardScript, SimulatedModel};
use rttc_core::synthetic;

pub const DOMAINS: [&str; 3] = ["code", "math", "medical"];

pub fn kb(per_domain: usize) -> KnowledgeBase {
    let domains: Vec<String> = DOMAINS.iter().map(|d| d.to_string()).collect();
    let mut kb = KnowledgeBase::new(64);
    kb.ingest(synthetic::corpus(11, &domains, per_domain), &HashEmbedder::default())
        .unwrap();
    kb
}

pub fn model(script: RewardScript) -> SimulatedModel {
    SimulatedModel::new(HashEmbedder::default(), script)
}
