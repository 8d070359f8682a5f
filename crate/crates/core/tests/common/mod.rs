#![allow(dead_code)]

use std::path::Path;

use calltriage::queue::QueueLevel;
use calltriage::stub::{transcript_with_confidence, CallFixture, FixtureSet};
use calltriage::synth::{presets, synthesize, VoiceSpec};
use serde_json::{json, Value};

pub const HIGH_C: f64 = 0.9;
pub const LOW_C: f64 = 0.55;

pub fn pothole() -> Value {
    json!({
        "hazard_category": "infrastructure",
        "life_threat_level": "none",
        "vulnerable_population": false,
        "situation_status": "stable",
        "persons_affected": 0,
        "entities": {"location": ["Nelson Street"], "mechanism": ["pothole"]}
    })
}

pub fn house_fire() -> Value {
    json!({
        "hazard_category": "fire",
        "life_threat_level": "potential",
        "vulnerable_population": false,
        "situation_status": "escalating",
        "persons_affected": 0,
        "entities": {"mechanism": ["house fire"]}
    })
}

pub fn children_trapped() -> Value {
    json!({
        "hazard_category": "fire",
        "life_threat_level": "imminent",
        "vulnerable_population": true,
        "situation_status": "stable",
        "persons_affected": 2,
        "entities": {"mechanism": ["fire"], "scale_notes": ["children trapped"]}
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Voice {
    Calm,
    Distressed,
    Severe,
    Extreme,
}

impl Voice {
    pub fn spec(self, secs: f64, seed: u64) -> VoiceSpec {
        match self {
            Voice::Calm => presets::calm(secs, seed),
            Voice::Distressed => presets::distressed(secs, seed),
            Voice::Severe => presets::severe(secs, seed),
            Voice::Extreme => presets::extreme(secs, seed),
        }
    }
}

pub fn wav(voice: Voice, secs: f64, seed: u64) -> Vec<u8> {
    synthesize(&voice.spec(secs, seed))
        .into_buffer("x")
        .to_wav_bytes()
}

pub struct CellCase {
    pub name: &'static str,
    pub voice: Voice,
    pub confidence: f64,
    pub text: &'static str,
    pub reply: Value,
    pub expected: QueueLevel,
}

/// One recording per priority-matrix cell.
pub fn cell_cases() -> Vec<CellCase> {
    use QueueLevel::*;
    vec![
        CellCase {
            name: "c1_routine",
            voice: Voice::Calm,
            confidence: HIGH_C,
            text: "Pothole on Nelson Street",
            reply: pothole(),
            expected: Q5Routine,
        },
        CellCase {
            name: "c2_composed_reporter",
            voice: Voice::Calm,
            confidence: HIGH_C,
            text: "House fire, spreading to neighbor's yard",
            reply: house_fire(),
            expected: Q2Elevated,
        },
        CellCase {
            name: "c3_anxious_minor",
            voice: Voice::Distressed,
            confidence: HIGH_C,
            text: "There is a big hole in the road by the school",
            reply: pothole(),
            expected: Q3Monitor,
        },
        CellCase {
            name: "c4_aligned",
            voice: Voice::Distressed,
            confidence: HIGH_C,
            text: "My children are trapped in the burning house",
            reply: children_trapped(),
            expected: Q1Immediate,
        },
        CellCase {
            name: "c5_review",
            voice: Voice::Calm,
            confidence: LOW_C,
            text: "road broke up near di market",
            reply: pothole(),
            expected: Q5Review,
        },
        CellCase {
            name: "c6_dialect",
            voice: Voice::Calm,
            confidence: LOW_C,
            text: "Pickney dem trap inna di fire",
            reply: children_trapped(),
            expected: Q2Elevated,
        },
        CellCase {
            name: "c7_fragments",
            voice: Voice::Distressed,
            confidence: LOW_C,
            text: "come quick di road",
            reply: pothole(),
            expected: Q1Immediate,
        },
        CellCase {
            name: "c8_all_elevated",
            voice: Voice::Distressed,
            confidence: LOW_C,
            text: "fire a spread next door yard",
            reply: house_fire(),
            expected: Q1Immediate,
        },
    ]
}

pub fn fixture_for(text: &str, confidence: f64, reply: Option<Value>) -> CallFixture {
    CallFixture {
        transcript: Some(transcript_with_confidence(text, confidence)),
        llm_reply: reply,
    }
}

/// Write the eight cell recordings and `fixtures.json` into `dir`.
pub fn write_cell_corpus(dir: &Path, secs: f64) -> Vec<CellCase> {
    let cases = cell_cases();
    let mut set = FixtureSet::default();
    for (i, c) in cases.iter().enumerate() {
        std::fs::write(
            dir.join(format!("{}.wav", c.name)),
            wav(c.voice, secs, i as u64 + 1),
        )
        .unwrap();
        set.calls.insert(
            c.name.to_owned(),
            fixture_for(c.text, c.confidence, Some(c.reply.clone())),
        );
    }
    set.save(dir.join("fixtures.json")).unwrap();
    cases
}
