use proptest::prelude::*;

/// One line of item text that the grammar can carry unchanged: no surrounding
/// whitespace, no leading list number and no leading keyword.
pub fn item_text() -> impl Strategy<Value = String> {
    "[A-Za-zÀ-ÿ\u{4e00}-\u{4e2f}][A-Za-z0-9À-ÿ\u{4e00}-\u{4e2f} ,;:'()?!.-]{0,60}[A-Za-z0-9?.!)]"
        .prop_filter("keyword prefix", |s| {
            let lower = s.to_lowercase();
            !lower.starts_with("question:") && !lower.starts_with("answer:")
        })
}

/// Random text biased towards the grammar's tokens so the fuzzer reaches
/// the interesting states.
pub fn fuzz_input() -> impl Strategy<Value = String> {
    let token = prop_oneof![
        3 => any::<String>(),
        2 => Just("Question:".to_string()),
        2 => Just("Answer:".to_string()),
        2 => (0u64..20).prop_map(|n| format!("{n}. ")),
        1 => Just("99999999999. Question:".to_string()),
        2 => Just("\n".to_string()),
        1 => Just("\n\n".to_string()),
        1 => Just("\r\n".to_string()),
        1 => Just("  ".to_string()),
    ];
    prop::collection::vec(token, 0..24).prop_map(|t| t.concat())
}
