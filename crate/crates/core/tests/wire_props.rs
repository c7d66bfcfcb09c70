use proptest::prelude::*;
use semcom_core::protocol::{payload_bits, MessageBody, PixelBox, SemMessage, HEADER_BYTES};
use semcom_core::semcom::rate::{bitmap_bits, list_bits};
use semcom_core::semcom::Patch;

fn patch(cells: usize, b: u8) -> impl Strategy<Value = Patch> {
    let max = if b == 32 { u32::MAX } else { (1u32 << b) - 1 };
    proptest::collection::btree_map(0..cells as u32, 0..=max, 0..=cells.min(64)).prop_map(|m| {
        let (c, i): (Vec<u32>, Vec<u32>) = m.into_iter().unzip();
        Patch::new(c, i).unwrap()
    })
}

fn indices(n: usize, b: u8) -> impl Strategy<Value = Vec<u32>> {
    let max = if b == 32 { u32::MAX } else { (1u32 << b) - 1 };
    proptest::collection::vec(0..=max, n)
}

fn message() -> impl Strategy<Value = SemMessage> {
    (1u32..=12, 1u32..=12, 1u8..=32, prop::sample::select(vec![1u8, 2, 3, 4])).prop_flat_map(|(hq, wq, b, f)| {
        let (h, w) = (hq * f as u32, wq * f as u32);
        let cells = (h * w) as usize;
        let ctx = (hq * wq) as usize;
        let body = prop_oneof![
            indices(ctx, b).prop_map(|indices| MessageBody::ContextOnly { indices }),
            indices(cells, b).prop_map(|indices| MessageBody::FullLatent { indices }),
            (indices(ctx, b), patch(cells, b))
                .prop_map(move |(context, patch)| MessageBody::ContextPlusTask { context_factor: f, context, patch }),
            patch(cells, b).prop_map(|patch| MessageBody::TaskPatch { patch }),
            Just(MessageBody::MoreInfoRequest),
            any::<[u16; 4]>().prop_map(|v| MessageBody::RegionRequest { region: PixelBox { x0: v[0], y0: v[1], x1: v[2], y1: v[3] } }),
        ];
        body.prop_map(move |body| {
            let (gh, gw) = if matches!(body, MessageBody::ContextOnly { .. }) { (hq, wq) } else { (h, w) };
            SemMessage { grid_h: gh, grid_w: gw, index_bits: b, body }
        })
    })
}

proptest! {
    #[test]
    fn serialize_round_trips(msg in message()) {
        let bytes = msg.serialize().unwrap();
        prop_assert_eq!(&SemMessage::deserialize(&bytes).unwrap(), &msg);
        // payload never exceeds what is on the wire after the header
        prop_assert!(payload_bits(&msg) <= 8 * (bytes.len() - HEADER_BYTES) as u64);
    }

    #[test]
    fn truncation_is_rejected(msg in message(), cut in 1usize..8) {
        let bytes = msg.serialize().unwrap();
        let keep = bytes.len().saturating_sub(cut);
        prop_assert!(SemMessage::deserialize(&bytes[..keep]).is_err());
    }

    #[test]
    fn position_cost_is_the_cheaper_encoding(n in 0usize..300, cells in 1usize..300) {
        prop_assume!(n <= cells);
        let list = list_bits(n, cells).unwrap();
        let bitmap = bitmap_bits(cells);
        let chosen = semcom_core::semcom::rate::position_encoding(n, cells).1;
        prop_assert_eq!(chosen, list.min(bitmap));
    }
}
