#![no_main]

use hvm_core::model::Inventory;
use libfuzzer_sys::fuzz_target;

// Any accepted document is a valid inventory that survives a round trip.
fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(inv) = Inventory::from_json(text) {
        inv.validate().expect("loaded inventories are valid");
        let again = Inventory::from_json(&inv.to_json()).expect("own output parses");
        assert_eq!(again, inv);
    }
});
