//! Turns panics inside the system under test into trace text.

use std::cell::{Cell, RefCell};
use std::panic::{self, AssertUnwindSafe};
use std::sync::Once;

thread_local! {
    static CAPTURING: Cell<bool> = const { Cell::new(false) };
    static LAST: RefCell<Option<String>> = const { RefCell::new(None) };
}

fn install_hook() {
    static INSTALL: Once = Once::new();
    INSTALL.call_once(|| {
        let default = panic::take_hook();
        panic::set_hook(Box::new(move |info| {
            if CAPTURING.with(Cell::get) {
                let msg = info
                    .payload()
                    .downcast_ref::<&str>()
                    .map(|s| s.to_string())
                    .or_else(|| info.payload().downcast_ref::<String>().cloned())
                    .unwrap_or_else(|| "non-string panic payload".into());
                let location = info
                    .location()
                    .map(|l| format!("{}:{}", l.file(), l.line()))
                    .unwrap_or_else(|| "unknown".into());
                LAST.with(|l| *l.borrow_mut() = Some(format!("PANIC at {location}: {msg}")));
            } else {
                default(info);
            }
        }));
    });
}

/// Runs `f`, converting a panic into its message and location. The panic
/// is not printed.
pub fn catch_panic<R>(f: impl FnOnce() -> R) -> Result<R, String> {
    install_hook();
    let was = CAPTURING.with(|c| c.replace(true));
    let r = panic::catch_unwind(AssertUnwindSafe(f));
    CAPTURING.with(|c| c.set(was));
    r.map_err(|_| LAST.with(|l| l.borrow_mut().take()).unwrap_or_else(|| "PANIC".into()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn captures_message() {
        let r: Result<(), String> = catch_panic(|| panic!("boom {}", 7));
        let msg = r.unwrap_err();
        assert!(msg.starts_with("PANIC at "), "{msg}");
        assert!(msg.ends_with(": boom 7"), "{msg}");
        assert_eq!(catch_panic(|| 3), Ok(3));
    }
}
