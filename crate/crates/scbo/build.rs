fn main() {
    // Dense linear algebra is delegated to the system BLAS/LAPACK. OpenBLAS as
    // shipped on Debian/Ubuntu (libopenblas-dev) carries the full LAPACK symbol
    // set in one shared object, so a single link line suffices. Override with
    // e.g. SCBO_BLAS_LIBS="lapack blas" for other distributions.
    let libs = std::env::var("SCBO_BLAS_LIBS").unwrap_or_else(|_| "openblas".to_string());
    for lib in libs.split_whitespace() {
        println!("cargo:rustc-link-lib=dylib={lib}");
    }
    println!("cargo:rerun-if-env-changed=SCBO_BLAS_LIBS");
}
