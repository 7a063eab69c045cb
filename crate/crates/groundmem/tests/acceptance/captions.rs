use groundmem_core::caption::{parse_caption, render_annotated, CaptionError};
use groundmem_core::EntityType;
use proptest::prelude::*;
use proptest::test_runner::TestCaseError;

use crate::{ensure, CAPTION_CASES};

#[derive(Debug, Clone)]
enum Piece {
    Text(String),
    Mention(String, EntityType),
}

fn label() -> impl Strategy<Value = String> {
    ("[a-z][a-z0-9]{0,6}", prop::collection::vec("[a-z0-9]{1,4}", 0..2), 1u32..40)
        .prop_map(|(head, middle, n)| {
            let mut s = head;
            for m in middle {
                s.push('_');
                s.push_str(&m);
            }
            format!("{s}_{n}")
        })
}

fn piece() -> impl Strategy<Value = Piece> {
    let ty = prop_oneof![Just(EntityType::Agent), Just(EntityType::Object), Just(EntityType::Action)];
    prop_oneof![
        3 => "[a-zA-Z0-9 ,.'!?()é-]{1,12}".prop_map(Piece::Text),
        1 => "\\[[a-z ]{1,6}\\]".prop_map(Piece::Text),
        3 => (label(), ty).prop_map(|(l, t)| Piece::Mention(l, t)),
    ]
}

fn check_one(pieces: &[Piece]) -> Result<(), TestCaseError> {
    let mut text = String::new();
    let mut plain = String::new();
    let mut expected = Vec::new();
    for p in pieces {
        match p {
            Piece::Text(t) => {
                text.push_str(t);
                plain.push_str(t);
            }
            Piece::Mention(l, ty) => {
                let start = text.len();
                text.push_str(&format!("[{l}:{}]", ty.name()));
                plain.push_str(l);
                expected.push((l.clone(), *ty, (start, text.len())));
            }
        }
    }
    let parsed = parse_caption(&text).map_err(|e| TestCaseError::fail(format!("{text:?}: {e}")))?;
    let got: Vec<_> = parsed.mentions.iter().map(|m| (m.label.clone(), m.entity_type, m.span)).collect();
    prop_assert_eq!(&got, &expected, "mentions of {:?}", text);
    prop_assert_eq!(&parsed.plain, &plain);
    let rendered = render_annotated(&parsed).map_err(|e| TestCaseError::fail(format!("{text:?}: {e}")))?;
    prop_assert_eq!(rendered, text);
    Ok(())
}

pub fn check() -> Result<String, String> {
    let mut runner = crate::runner(CAPTION_CASES);
    runner
        .run(&prop::collection::vec(piece(), 0..10), |pieces| check_one(&pieces))
        .map_err(|e| format!("round trip: {e}"))?;

    let cases: [(&str, fn(&CaptionError) -> bool); 3] = [
        ("[cup_1:Thing] on the table", |e| matches!(e, CaptionError::UnknownEntityType { .. })),
        ("[cup_1:Object on the table", |e| matches!(e, CaptionError::UnterminatedAnnotation { .. })),
        ("[Cup:Object] on the table", |e| matches!(e, CaptionError::InvalidLabel { .. })),
    ];
    for (input, expected) in cases {
        match parse_caption(input) {
            Err(e) => ensure(expected(&e), || format!("{input:?} raised the wrong error: {e}"))?,
            Ok(_) => return Err(format!("{input:?} was accepted")),
        }
    }
    Ok(format!("{CAPTION_CASES} generated captions round-trip; 3 malformed inputs raise typed errors"))
}
