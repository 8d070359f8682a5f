//! Walk every cell of the priority matrix, then show the early-exit rules
//! and a small dispatch queue.

use calltriage::queue::{
    assign_priority, check_early_exit, CallId, DispatchQueue, MatrixCell, RoutingThresholds,
    SignalBands,
};

fn hl(b: bool) -> &'static str {
    if b {
        "H"
    } else {
        "L"
    }
}

fn main() {
    println!("C S D  level         annotation");
    for cell in MatrixCell::all() {
        let (level, why) = cell.level();
        println!(
            "{} {} {}  {:<13} {why}",
            hl(cell.confidence_high),
            hl(cell.content_high),
            hl(cell.concern_high),
            level.label()
        );
    }

    let t = RoutingThresholds::default();
    println!();
    for (d, c) in [
        (0.95, Some(0.9)),
        (0.85, Some(0.3)),
        (0.85, Some(0.6)),
        (0.6, None),
    ] {
        println!(
            "D={d:.2} C={c:?} -> early exit: {}",
            check_early_exit(Some(d), c, &t)
        );
    }

    let mut q = DispatchQueue::new();
    let calls = [
        ("pothole", Some(0.92), Some(10), Some(0.2)),
        ("fire", Some(0.88), Some(80), Some(0.7)),
        ("muffled", Some(0.30), None, Some(0.45)),
        ("screaming", Some(0.50), Some(60), Some(0.93)),
    ];
    for (id, c, s, d) in calls {
        let bands = SignalBands::from_signals(c, s, d, &t);
        let exit = check_early_exit(d, c, &t);
        q.enqueue(CallId::from(id), assign_priority(&bands, exit))
            .expect("unique ids");
    }
    println!();
    while let Some(e) = q.claim_next() {
        println!(
            "{:<10} {:<13} {}",
            e.call_id.as_str(),
            e.assignment.level.label(),
            e.assignment.reason_codes.join("; ")
        );
    }
}
