//! Parse a classification reply and compute its additive content score.

use calltriage::asr::ConfidenceBand;
use calltriage::content::{parse_reply, score_content, ContentParams};

const REPLIES: [&str; 3] = [
    r#"{"hazard_category": "infrastructure", "life_threat_level": "none",
        "vulnerable_population": false, "situation_status": "stable", "persons_affected": 0}"#,
    r#"{"hazard_category": "fire", "life_threat_level": "potential",
        "vulnerable_population": false, "situation_status": "escalating", "persons_affected": 1}"#,
    // prose around the object is tolerated
    r#"Here you go: {"hazard_category": "fire", "life_threat_level": "imminent",
        "vulnerable_population": true, "situation_status": "escalating", "persons_affected": 3,
        "entities": {"location": ["Nelson Street"], "mechanism": ["house fire"]}}"#,
];

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let params = ContentParams::default();
    for raw in REPLIES {
        let (c, entities) = parse_reply(raw, ConfidenceBand::High)?;
        let s = score_content(&c, &params);
        println!(
            "{:?}/{:?}: hazard {} + threat {} + vulnerable {} + scale {} = {}{}",
            c.hazard_category,
            c.life_threat_level,
            s.s_hazard,
            s.s_threat,
            s.s_vuln,
            s.s_scale,
            s.s_c,
            if s.high_content { " (high)" } else { "" }
        );
        if !entities.location.is_empty() {
            println!("  location: {}", entities.location.join(", "));
        }
    }
    match parse_reply("the category is fire", ConfidenceBand::High) {
        Ok(_) => unreachable!(),
        Err(e) => println!("rejected: {e}"),
    }
    Ok(())
}
