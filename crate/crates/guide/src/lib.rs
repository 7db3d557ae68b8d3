//! The chapters of the book, compiled as documentation so that every code
//! snippet in them is built and run by `cargo test`.

macro_rules! chapters {
    ($($name:ident),* $(,)?) => {
        $(
            #[doc = include_str!(concat!("../../../book/src/", stringify!($name), ".md"))]
            pub mod $name {}
        )*
    };
}

chapters!(
    introduction,
    kernels,
    jump_models,
    nonlocal,
    steady_states,
    local_laws,
    focusing_limit,
    food_metric,
    experiments,
);
