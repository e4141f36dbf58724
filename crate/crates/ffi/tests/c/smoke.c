#include <stdio.h>
#include <stdlib.h>
#include <string.h>
#include "wcnkit.h"

static char *slurp(const char *path) {
    FILE *f = fopen(path, "rb");
    if (!f) return NULL;
    fseek(f, 0, SEEK_END);
    long n = ftell(f);
    fseek(f, 0, SEEK_SET);
    char *buf = malloc(n + 1);
    fread(buf, 1, n, f);
    buf[n] = 0;
    fclose(f);
    return buf;
}

#define CHECK(cond) do { if (!(cond)) { fprintf(stderr, "failed: %s (line %d)\n", #cond, __LINE__); return 1; } } while (0)

int main(int argc, char **argv) {
    CHECK(argc == 2);
    char *text = slurp(argv[1]);
    CHECK(text != NULL);

    WcnLattice *lat = NULL;
    CHECK(wcn_lattice_parse(text, &lat) == WCN_STATUS_OK);
    size_t arcs = 0;
    CHECK(wcn_lattice_num_arcs(lat, &arcs) == WCN_STATUS_OK && arcs > 0);

    char *s = NULL;
    CHECK(wcn_lattice_render_wcn(lat, '|', 0.3, WCN_ORDER_LATTICE, 1.0, 1.0, &s) == WCN_STATUS_OK);
    printf("%s\n", s);
    wcn_string_free(s);

    double score = 0;
    CHECK(wcn_lattice_best_path(lat, 1.0, 1.0, &s, &score) == WCN_STATUS_OK);
    printf("%s\n", s);
    double w = -1;
    CHECK(wcn_wer(s, "how many total yards did denver gain", &w) == WCN_STATUS_OK && w == 0.0);
    wcn_string_free(s);
    wcn_lattice_free(lat);

    int em = 0;
    CHECK(wcn_exact_match("The New England Patriots!", "new england patriots", 0, &em) == WCN_STATUS_OK && em == 1);

    CHECK(wcn_lattice_parse("not a lattice", &lat) == WCN_STATUS_PARSE_ERROR && lat == NULL);
    CHECK(wcn_last_error_message() != NULL);
    printf("error: %s\n", wcn_last_error_message());
    free(text);
    return 0;
}
