#define MAX_DUMP_SIZE 1024

void dump_status(TEEC_Session session, TEEC_Operation op, uint32_t err_origin)
{
    TEEC_Result res;
char dump[MAX_DUMP_SIZE];
op.params[0].tmpref.buffer = (void *)dump;
op.params[0].tmpref.size = MAX_DUMP_SIZE - 1;
res = TEEC_InvokeCommand(&session, TA_SDP_DUMP_STATUS, &op, &err_origin);
}
