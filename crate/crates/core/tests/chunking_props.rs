use proptest::prelude::*;
use selfqa_core::ingest::{chunk_unit, KnowledgeUnit, UnitKind};

fn unit(text: &str) -> KnowledgeUnit {
    KnowledgeUnit {
        id: "u".into(),
        source: "mem".into(),
        kind: UnitKind::Unstructured,
        text: text.into(),
        metadata: Default::default(),
    }
}

/// Rank of a split that ends a chunk right before `chars[pos]`:
/// 3 paragraph, 2 sentence, 1 whitespace, 0 none.
fn rank(chars: &[char], pos: usize) -> u8 {
    let before: String = chars[..pos].iter().collect();
    if before.ends_with("\n\n") {
        3
    } else if pos >= 2 && chars[pos - 1].is_whitespace() && ".!?".contains(chars[pos - 2]) {
        2
    } else if pos >= 1 && chars[pos - 1].is_whitespace() {
        1
    } else {
        0
    }
}

/// Checks every chunking contract by brute force over the candidate window.
fn check(text: &str, max: usize, overlap: usize) -> Result<(), String> {
    let chars: Vec<char> = text.chars().collect();
    let chunks = chunk_unit(&unit(text), max, overlap).map_err(|e| e.to_string())?;
    if chars.is_empty() {
        return if chunks.is_empty() { Ok(()) } else { Err("chunks for empty text".into()) };
    }
    let mut rebuilt: Vec<char> = Vec::new();
    for (i, c) in chunks.iter().enumerate() {
        let (s, e) = c.char_span;
        let len = c.text.chars().count();
        if c.index != i || len == 0 || len > max || e - s != len {
            return Err(format!("chunk {i} has bad size or span {:?}", c.char_span));
        }
        if c.text.chars().collect::<Vec<_>>() != chars[s..e] {
            return Err(format!("chunk {i} text does not match its span"));
        }
        if i == 0 {
            rebuilt.extend(&chars[s..e]);
        } else {
            let prev_end = chunks[i - 1].char_span.1;
            if prev_end - s != overlap {
                return Err(format!("chunks {} and {i} overlap by {}", i - 1, prev_end - s));
            }
            rebuilt.extend(&chars[prev_end..e]);
        }
        if e < chars.len() {
            let floor = s + overlap.max(max / 2);
            let chosen = rank(&chars, e);
            for p in floor + 1..=s + max {
                let r = rank(&chars, p);
                if r > chosen || (r == chosen && r > 0 && p > e) {
                    return Err(format!("chunk {i} ends at {e} but {p} is a better split"));
                }
            }
            if chosen == 0 && e != s + max {
                return Err(format!("hard cut of chunk {i} is not at the limit"));
            }
        }
    }
    if rebuilt != chars {
        return Err("chunks do not reconstruct the text".into());
    }
    Ok(())
}

#[test]
fn short_unit_is_one_chunk() {
    let text = "x".repeat(100);
    let chunks = chunk_unit(&unit(&text), 512, 0).unwrap();
    assert_eq!(chunks.len(), 1);
    assert_eq!(chunks[0].text, text);
}

#[test]
fn hard_cuts_without_whitespace() {
    let text = "a".repeat(1000);
    let sizes: Vec<usize> = chunk_unit(&unit(&text), 400, 0)
        .unwrap()
        .iter()
        .map(|c| c.text.chars().count())
        .collect();
    assert_eq!(sizes, vec![400, 400, 200]);
    check(&text, 400, 0).unwrap();
}

#[test]
fn splits_at_paragraph_break() {
    let text = format!("{}\n\n{}", "para1 ".repeat(20).trim_end(), "para2 ".repeat(20).trim_end());
    let chunks = chunk_unit(&unit(&text), 130, 0).unwrap();
    assert_eq!(chunks.len(), 2);
    assert!(chunks[0].text.ends_with("\n\n"));
    assert!(chunks[1].text.starts_with("para2"));
    check(&text, 130, 0).unwrap();
}

fn prose() -> impl Strategy<Value = String> {
    let piece = prop_oneof![
        6 => "[a-zA-Zé中]{1,9}",
        3 => Just(" ".to_string()),
        1 => Just(". ".to_string()),
        1 => Just("? ".to_string()),
        1 => Just("\n".to_string()),
        1 => Just("\n\n".to_string()),
    ];
    prop::collection::vec(piece, 0..120).prop_map(|p| p.concat())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(600))]

    #[test]
    fn chunking_contracts_hold(text in prose(), max in 1usize..80, overlap_frac in 0.0f64..0.9) {
        let overlap = ((max as f64) * overlap_frac) as usize;
        prop_assume!(overlap < max);
        if let Err(e) = check(&text, max, overlap) {
            return Err(TestCaseError::fail(e));
        }
    }

    #[test]
    fn zero_overlap_concatenates_exactly(text in any::<String>(), max in 1usize..50) {
        let chunks = chunk_unit(&unit(&text), max, 0).unwrap();
        let joined: String = chunks.iter().map(|c| c.text.as_str()).collect();
        prop_assert_eq!(joined, text);
    }
}
