/* Inner update for one (i, j) pair; restrict lets the compiler vectorise. */
static inline void pair_row(const double *restrict lrow, const double *restrict srow,
                            double *restrict out, double *restrict cl,
                            double *restrict cr, Py_ssize_t n)
{
    for (Py_ssize_t h = 0; h < n; ++h) {
        double v = lrow[h] + srow[h];
        double a = (double)(v > 0.0);
        out[h] += a * v;
        cl[h] += a;
        cr[h] += a;
    }
}
