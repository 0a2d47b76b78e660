/* Links against the static library and drives the C API end to end. */
#include <stdio.h>
#include <string.h>
#include "ophglm.h"

static int32_t echo(void *ctx, const char *prompt, char *out, size_t cap) {
    (void)ctx;
    (void)prompt;
    snprintf(out, cap, "noted");
    return 0;
}

#define CHECK(cond) do { if (!(cond)) { fprintf(stderr, "check failed line %d: %s (%s)\n", __LINE__, #cond, oph_last_error()); return 1; } } while (0)

int main(int argc, char **argv) {
    CHECK(argc == 2);
    OphOracle *oracle = NULL;
    CHECK(oph_oracle_load(argv[1], &oracle) == OPH_OK);

    char *report = NULL;
    CHECK(oph_diagnose(oracle, "c1", 10, 10, &report) == OPH_OK);
    CHECK(strstr(report, "moderate NPDR") != NULL);

    OphSession *s = NULL;
    CHECK(oph_session_new("c-session", &s) == OPH_OK);
    CHECK(oph_session_attach_report(s, "c1", report) == OPH_OK);
    char *reply = NULL;
    CHECK(oph_session_chat(s, "is it serious?", echo, NULL, &reply) == OPH_OK);
    CHECK(strcmp(reply, "noted") == 0);
    CHECK(oph_session_turn_count(s) == 2);

    double acc = 0.0;
    CHECK(oph_accuracy(7, 0, 3, 0, &acc) == OPH_OK && acc == 0.7);
    CHECK(oph_accuracy(0, 0, 0, 0, &acc) == OPH_UNDEFINED);

    oph_string_free(reply);
    oph_string_free(report);
    oph_session_free(s);
    oph_oracle_free(oracle);
    printf("ok\n");
    return 0;
}
